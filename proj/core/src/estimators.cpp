#include "dagfit/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dagfit/numeric.hpp"
#include "dagfit/objective.hpp"
#include "dagfit/threading.hpp"

namespace dagfit {

namespace {

// Sub-stream tags; sample index rides in the second slot.
constexpr std::uint64_t kTagSample = 1;
constexpr std::uint64_t kTagVarianceRepeat = 2;
constexpr std::uint64_t kTagSubsample = 3;

Mat edge_prob_matrix(const BplParams& params) {
  const int n = params.n();
  Mat p(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j)) p.at(i, j) = sigmoid(params.edge_logits.at(i, j));
  return p;
}

Adjacency sample_edges_from_probs(const BplParams& params, const Mat& probs, Rng& rng) {
  const int n = params.n();
  Adjacency mask(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j) && rng.bernoulli(probs.at(i, j))) mask.set(i, j, 1);
  return mask;
}

double sum_bernoulli_variance(const BplParams& params, const Mat& probs) {
  KahanSum s;
  const int n = params.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j)) {
        double p = probs.at(i, j);
        s.add(p * (1.0 - p));
      }
  return s.value();
}

// Column-major copy so parent masks are contiguous.
Adjacency transpose(const Adjacency& a) {
  Adjacency t(a.n);
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j)
      if (a.at(i, j)) t.set(j, i, 1);
  return t;
}

struct SamplePool {
  std::vector<double> f;
  std::vector<Permutation> perms;
  std::vector<Adjacency> masks;
  double mean_f = 0.0;
};

// Reward of one sampled DAG: mean over batch rows of the regime-weighted
// included-node log-likelihood sum. Optionally accumulates pathwise model
// gradients with weight (regime weight)/(K * batch).
double sample_reward(const InterventionalDataset& d, std::span<const int> rows,
                     std::span<const double> regime_weight, const ConditionalModel& model,
                     const DagSample& s, double model_weight, ConditionalModel* grad) {
  const int n = d.n_vars();
  Adjacency parents = transpose(s.adjacency);
  KahanSum total;
  for (int r : rows) {
    const double* x = d.x.row(r);
    const int regime = d.regime_of[r];
    const auto& excluded = d.intervened[regime];
    const double wr = regime_weight[regime];
    KahanSum row_sum;
    std::size_t e = 0;
    for (int j = 0; j < n; ++j) {
      while (e < excluded.size() && excluded[e] < j) ++e;
      if (e < excluded.size() && excluded[e] == j) continue;
      if (grad)
        row_sum.add(loglik_grad_node(model, x, n, parents.row(j), j, wr * model_weight, *grad));
      else
        row_sum.add(loglik_node(model, x, n, parents.row(j), j));
    }
    total.add(wr * row_sum.value());
  }
  return total.value() / static_cast<double>(rows.size());
}

// Chunked so per-chunk gradient accumulators stay deterministic regardless
// of which thread runs which chunk.
constexpr int kSampleChunk = 8;

SamplePool build_pool(const InterventionalDataset& d, std::span<const int> rows,
                      std::span<const double> regime_weight, const BplParams& params,
                      const ConditionalModel& model, int K, const Mat& probs, const Rng& rng,
                      ConditionalModel* d_model_out) {
  SamplePool pool;
  pool.f.assign(K, 0.0);
  pool.perms.resize(K);
  pool.masks.resize(K);
  const int n_chunks = (K + kSampleChunk - 1) / kSampleChunk;
  std::vector<ConditionalModel> chunk_grads;
  if (d_model_out) chunk_grads.assign(n_chunks, zeros_like(model));
  const double model_weight = 1.0 / (static_cast<double>(K) * static_cast<double>(rows.size()));
  parallel_for(n_chunks, [&](int c) {
    int lo = c * kSampleChunk;
    int hi = std::min(K, lo + kSampleChunk);
    for (int k = lo; k < hi; ++k) {
      Rng sub = rng.derive(kTagSample, static_cast<std::uint64_t>(k));
      DagSample s;
      s.perm = sample_permutation(params.theta, sub);
      s.mask = sample_edges_from_probs(params, probs, sub);
      s.adjacency = adjacency_from_sample(s.perm, s.mask);
      pool.f[k] = sample_reward(d, rows, regime_weight, model, s, model_weight,
                                d_model_out ? &chunk_grads[c] : nullptr);
      pool.perms[k] = std::move(s.perm);
      pool.masks[k] = std::move(s.mask);
    }
  });
  if (d_model_out) {
    *d_model_out = zeros_like(model);
    for (int c = 0; c < n_chunks; ++c) axpy_params(*d_model_out, 1.0, chunk_grads[c]);
  }
  KahanSum mf;
  for (double v : pool.f) mf.add(v);
  pool.mean_f = mf.value() / K;
  return pool;
}

struct ScoreStats {
  std::vector<double> theta_raw;  // sum_k c_k * pl_score_k
  Mat omega_raw;                  // sum_k c_k * bernoulli_score_k
  double sum_gsq = 0.0;           // sum_k c_k^2 ||score_k||^2
  double max_c2 = 0.0;
};

ScoreStats accumulate_scores(const SamplePool& pool, const BplParams& params, const Mat& probs,
                             bool use_baseline) {
  const int n = params.n();
  const int K = static_cast<int>(pool.f.size());
  ScoreStats st;
  st.theta_raw.assign(n, 0.0);
  st.omega_raw = Mat(n, n, 0.0);
  for (int k = 0; k < K; ++k) {
    double c = use_baseline ? pool.f[k] - pool.mean_f : pool.f[k];
    std::vector<double> s_theta = pl_score(params.theta, pool.perms[k]);
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      st.theta_raw[i] += c * s_theta[i];
      norm2 += s_theta[i] * s_theta[i];
    }
    const Adjacency& mask = pool.masks[k];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (params.free_entry(i, j)) {
          double g = static_cast<double>(mask.at(i, j)) - probs.at(i, j);
          st.omega_raw.at(i, j) += c * g;
          norm2 += g * g;
        }
    st.sum_gsq += c * c * norm2;
    st.max_c2 = std::max(st.max_c2, c * c);
  }
  return st;
}

double flat_norm2(const std::vector<double>& v, const Mat& m) {
  double s = 0.0;
  for (double x : v) s += x * x;
  for (double x : m.v) s += x * x;
  return s;
}

}  // namespace

GradientBundle reinforce_step(const InterventionalDataset& d, std::span<const int> rows,
                              const BplParams& params, const ConditionalModel& model, int K,
                              double lambda, Rng& rng, bool use_baseline) {
  if (K < 2) throw std::invalid_argument("reinforce_step: K must be >= 2");
  if (lambda < 0.0) throw std::invalid_argument("reinforce_step: negative lambda");
  if (rows.empty()) throw std::invalid_argument("reinforce_step: empty batch");
  const int n = params.n();
  Mat probs = edge_prob_matrix(params);
  const std::vector<double> regime_weight = regime_weights(d);

  GradientBundle out;
  out.d_model = zeros_like(model);
  SamplePool pool = build_pool(d, rows, regime_weight, params, model, K, probs, rng, &out.d_model);
  ScoreStats st = accumulate_scores(pool, params, probs, use_baseline);

  const double norm = use_baseline ? static_cast<double>(K - 1) : static_cast<double>(K);
  std::vector<double> count_d_theta;
  Mat count_d_logits;
  double count = expected_edge_count_and_grad(params, &count_d_theta, &count_d_logits);

  out.d_theta.assign(n, 0.0);
  out.d_edge_logits = Mat(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    out.d_theta[i] = st.theta_raw[i] / norm - lambda * count_d_theta[i];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j))
        out.d_edge_logits.at(i, j) =
            st.omega_raw.at(i, j) / norm - lambda * count_d_logits.at(i, j);

  out.diagnostics.objective_estimate = pool.mean_f - lambda * count;
  out.diagnostics.baseline = use_baseline ? pool.mean_f : 0.0;
  // Variance of the K-sample estimator itself: per-draw sample covariance
  // trace, rescaled by how the draws are averaged.
  double per_draw_trace =
      (st.sum_gsq - flat_norm2(st.theta_raw, st.omega_raw) / K) / (K - 1);
  out.diagnostics.grad_trace_variance = per_draw_trace * K / (norm * norm);
  out.diagnostics.variance_bound = st.max_c2 * (n + sum_bernoulli_variance(params, probs));
  return out;
}

VarianceReport variance_report(const InterventionalDataset& d, std::span<const int> rows,
                               const BplParams& params, const ConditionalModel& model, int K,
                               int repeats, bool use_baseline, Rng& rng) {
  if (repeats < 2) throw std::invalid_argument("variance_report: repeats must be >= 2");
  if (K < 2) throw std::invalid_argument("variance_report: K must be >= 2");
  const int n = params.n();
  Mat probs = edge_prob_matrix(params);
  const double pq_sum = sum_bernoulli_variance(params, probs);
  const std::vector<double> regime_weight = regime_weights(d);

  std::vector<std::vector<double>> with_est(repeats), without_est(repeats);
  double bound = 0.0, bound_without = 0.0;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng sub = rng.derive(kTagVarianceRepeat, static_cast<std::uint64_t>(rep));
    SamplePool pool = build_pool(d, rows, regime_weight, params, model, K, probs, sub, nullptr);
    ScoreStats with_st = accumulate_scores(pool, params, probs, true);
    ScoreStats without_st = accumulate_scores(pool, params, probs, false);
    bound = std::max(bound, with_st.max_c2 * (n + pq_sum));
    bound_without = std::max(bound_without, without_st.max_c2 * (n + pq_sum));
    auto flatten = [&](const ScoreStats& st, double norm) {
      std::vector<double> flat;
      flat.reserve(n + static_cast<std::size_t>(n) * n);
      for (double v : st.theta_raw) flat.push_back(v / norm);
      for (double v : st.omega_raw.v) flat.push_back(v / norm);
      return flat;
    };
    with_est[rep] = flatten(with_st, K - 1);
    without_est[rep] = flatten(without_st, K);
  }

  auto covariance_trace = [&](const std::vector<std::vector<double>>& est) {
    const std::size_t dim = est[0].size();
    double trace = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      double mean = 0.0;
      for (int rep = 0; rep < repeats; ++rep) mean += est[rep][c];
      mean /= repeats;
      double acc = 0.0;
      for (int rep = 0; rep < repeats; ++rep) {
        double dev = est[rep][c] - mean;
        acc += dev * dev;
      }
      trace += acc / (repeats - 1);
    }
    return trace;
  };

  VarianceReport r;
  r.trace_with = covariance_trace(with_est);
  r.trace_without = covariance_trace(without_est);
  r.trace_variance = use_baseline ? r.trace_with : r.trace_without;
  r.bound = bound;
  r.bound_without = bound_without;
  r.ratio_with_over_without = r.trace_without > 0.0 ? r.trace_with / r.trace_without : 0.0;
  r.K = K;
  r.repeats = repeats;
  return r;
}

void save_variance_csv(const std::string& path, const std::vector<VarianceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_variance_csv: cannot open " + path);
  out << "step,trace_variance,bound,baseline_flag,K\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_double(r.trace_variance) << ',' << format_double(r.bound)
        << ',' << r.baseline_flag << ',' << r.K << '\n';
}

int cross_term_subsample_count(int n) {
  // Smallest c with c^3 >= n^2; the float cbrt can land a hair off an exact
  // cube root, so correct it in integers.
  const long long target = static_cast<long long>(n) * n;
  int c = static_cast<int>(std::llround(std::cbrt(static_cast<double>(target))));
  if (c < 1) c = 1;
  while (static_cast<long long>(c) * c * c < target) ++c;
  while (c > 1 && static_cast<long long>(c - 1) * (c - 1) * (c - 1) >= target) --c;
  return std::clamp(c, 1, n);
}

namespace {

// Shared core for analytic_score / analytic_gradient. Everything is derived
// from per-regime Gram matrices and per-row residual channels, so the batch
// is consumed regime by regime and only O(n^2) state is alive at once.
struct AnalyticOut {
  double value = 0.0;  // expected score, penalty not included
  bool want_grad = false;
  std::vector<double> d_theta;
  Mat d_omega;
  LinearGaussian d_model;
};

void analytic_core(const InterventionalDataset& d, std::span<const int> rows,
                   const BplParams& params, const LinearGaussian& model, int subsample,
                   Rng* rng, AnalyticOut& out) {
  const int n = params.n();
  if (model.n() != n) throw std::invalid_argument("analytic: model dimension mismatch");
  const double B = static_cast<double>(rows.size());

  // Cross-term target set.
  std::vector<std::uint8_t> in_sample(n, 1);
  double cross_scale = 1.0;
  if (subsample > 0 && subsample < n) {
    if (!rng) throw std::invalid_argument("analytic: subsampling requires an rng");
    Rng sub = rng->derive(kTagSubsample);
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int k = 0; k < subsample; ++k) {
      int pick = k + sub.uniform_int(n - k);
      std::swap(idx[k], idx[pick]);
    }
    in_sample.assign(n, 0);
    for (int k = 0; k < subsample; ++k) in_sample[idx[k]] = 1;
    cross_scale = static_cast<double>(n) / static_cast<double>(subsample);
  }

  // Pair probabilities and derived matrices.
  Mat p(n, n, 0.0), q(n, n, 0.0), expected(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j)) {
        p.at(i, j) = sigmoid(params.edge_logits.at(i, j));
        q.at(i, j) = sigmoid(params.theta[i] - params.theta[j]);
        expected.at(i, j) = p.at(i, j) * q.at(i, j);
      }
  // ut.at(j, i) = E[a_ij] * w_ij: parent weights of node j, contiguous.
  Mat ut(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) ut.at(j, i) = expected.at(i, j) * model.weights.at(i, j);

  double theta_max = n ? *std::max_element(params.theta.begin(), params.theta.end()) : 0.0;
  std::vector<double> e_theta(n);
  for (int i = 0; i < n; ++i) e_theta[i] = std::exp(params.theta[i] - theta_max);

  std::vector<double> sigma(n), inv_var(n), raw_sigma(n);
  for (int j = 0; j < n; ++j) {
    raw_sigma[j] = std::exp(model.log_scale[j]);
    sigma[j] = std::max(raw_sigma[j], kSigmaFloor);
    inv_var[j] = 1.0 / (sigma[j] * sigma[j]);
  }

  // Per-node channels, accumulated over the whole batch.
  std::vector<double> count_a(n, 0.0), sum_d(n, 0.0), sum_d2(n, 0.0), sum_v(n, 0.0),
      cross_val(n, 0.0), cross_tj(n, 0.0);
  const bool g = out.want_grad;
  Mat sdx, sx2, cross_h, cross_tt;
  if (g) {
    sdx = Mat(n, n, 0.0);       // sdx.at(j, i) = sum_rows D_rj * x_i
    sx2 = Mat(n, n, 0.0);       // sx2.at(j, i) = sum_{rows including j} x_i^2
    cross_h = Mat(n, n, 0.0);   // cross_h.at(j, i) = sum_r h_i
    cross_tt = Mat(n, n, 0.0);  // cross_tt.at(j, t) = d(cross)/d theta_t, t != j
  }

  // Group batch rows by regime.
  std::vector<std::vector<int>> by_regime(d.n_regimes());
  for (int r : rows) {
    if (r < 0 || r >= d.n_rows()) throw std::invalid_argument("analytic: row out of range");
    by_regime[d.regime_of[r]].push_back(r);
  }
  const std::vector<double> regime_weight = regime_weights(d);

  std::vector<double> dot(n), gram;  // gram reused across regimes
  std::vector<double> regime_sx2(n);
  for (int regime = 0; regime < d.n_regimes(); ++regime) {
    const auto& rlist = by_regime[regime];
    if (rlist.empty()) continue;
    std::vector<std::uint8_t> excluded = d.excluded_mask(regime);
    const double wr = regime_weight[regime];

    gram.assign(static_cast<std::size_t>(n) * n, 0.0);
    std::fill(regime_sx2.begin(), regime_sx2.end(), 0.0);
    for (int r : rlist) {
      const double* x = d.x.row(r);
      // dot_j = sum_i E[a_ij] w_ij x_i
      for (int j = 0; j < n; ++j) {
        const double* urow = ut.row(j);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += urow[i] * x[i];
        dot[j] = acc;
      }
      for (int i = 0; i < n; ++i) {
        regime_sx2[i] += x[i] * x[i];
        double* grow = gram.data() + static_cast<std::size_t>(i) * n;
        double xi = x[i];
        for (int k = 0; k < n; ++k) grow[k] += xi * x[k];
      }
      for (int j = 0; j < n; ++j) {
        if (excluded[j]) continue;
        double resid = x[j] - model.bias[j] - dot[j];
        double wresid = wr * resid;
        count_a[j] += wr;
        sum_d[j] += wresid;
        sum_d2[j] += wresid * resid;
        if (g) {
          double* srow = sdx.row(j);
          for (int i = 0; i < n; ++i) srow[i] += wresid * x[i];
        }
      }
    }
    // Fold the regime weight into the second-moment state once; everything
    // below (variance and cross channels) reads only these.
    if (wr != 1.0) {
      for (double& v : gram) v *= wr;
      for (double& v : regime_sx2) v *= wr;
    }

    for (int j = 0; j < n; ++j) {
      if (excluded[j]) continue;
      // Variance term via per-regime second moments.
      const double* urow = ut.row(j);
      double v_acc = 0.0;
      for (int i = 0; i < n; ++i) {
        double ev = expected.at(i, j);
        if (ev == 0.0) continue;
        double w = model.weights.at(i, j);
        v_acc += ev * (1.0 - ev) * w * w * regime_sx2[i];
      }
      sum_v[j] += v_acc;
      if (g) {
        double* s2row = sx2.row(j);
        for (int i = 0; i < n; ++i) s2row[i] += regime_sx2[i];
      }
      if (!in_sample[j]) continue;
      // Cross-covariance channels on this regime's Gram matrix.
      double ej = e_theta[j];
      double c_val = 0.0, c_tj = 0.0;
      for (int i = 0; i < n; ++i) {
        if (i == j) continue;
        double ui = urow[i];
        if (ui == 0.0 && !g) continue;
        const double* grow = gram.data() + static_cast<std::size_t>(i) * n;
        double ei = e_theta[i];
        for (int k = i + 1; k < n; ++k) {
          if (k == j) continue;
          double uk = urow[k];
          double prod = ui * uk;
          if (prod == 0.0) continue;
          double sum3 = ei + ej + e_theta[k];
          double t = ej / sum3;
          double pair = 2.0 * prod * grow[k];  // (i,k) and (k,i)
          c_val += pair * t;
          c_tj += pair * t * (1.0 - t);
          if (g) {
            cross_h.at(j, i) += uk * t * grow[k];
            cross_h.at(j, k) += ui * t * grow[k];
            cross_tt.at(j, i) -= pair * t * (ei / sum3);
            cross_tt.at(j, k) -= pair * t * (e_theta[k] / sum3);
          }
        }
      }
      cross_val[j] += c_val;
      cross_tj[j] += c_tj;
    }
  }

  // Assembly.
  KahanSum value;
  for (int j = 0; j < n; ++j) {
    double quad = sum_d2[j] + sum_v[j] + cross_scale * cross_val[j];
    value.add(count_a[j] * std::log(kTwoPi * sigma[j] * sigma[j]) + inv_var[j] * quad);
  }
  out.value = rows.empty() ? 0.0 : -0.5 * value.value() / B;

  if (!g) return;
  out.d_theta.assign(n, 0.0);
  out.d_omega = Mat(n, n, 0.0);
  out.d_model = LinearGaussian::init(n);
  for (int j = 0; j < n; ++j) {
    double quad = sum_d2[j] + sum_v[j] + cross_scale * cross_val[j];
    if (raw_sigma[j] > kSigmaFloor)
      out.d_model.log_scale[j] = -(count_a[j] - inv_var[j] * quad) / B;
    out.d_model.bias[j] = inv_var[j] * sum_d[j] / B;
    double scale_j = inv_var[j] / B;
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      double ev = expected.at(i, j);
      double w = model.weights.at(i, j);
      double h = cross_scale * cross_h.at(j, i);
      out.d_model.weights.at(i, j) =
          -scale_j * ev * (-sdx.at(j, i) + (1.0 - ev) * w * sx2.at(j, i) + h);
      if (!params.free_entry(i, j)) continue;
      double d_expected =
          -scale_j * (-w * sdx.at(j, i) + 0.5 * (1.0 - 2.0 * ev) * w * w * sx2.at(j, i) + w * h);
      double pij = p.at(i, j), qij = q.at(i, j);
      out.d_omega.at(i, j) = d_expected * pij * (1.0 - pij) * qij;
      double through_q = d_expected * pij * qij * (1.0 - qij);
      out.d_theta[i] += through_q;
      out.d_theta[j] -= through_q;
    }
    // Triple-softmax factor's own theta dependence.
    out.d_theta[j] += -0.5 * scale_j * cross_scale * cross_tj[j];
    for (int t = 0; t < n; ++t)
      if (t != j) out.d_theta[t] += -0.5 * scale_j * cross_scale * cross_tt.at(j, t);
  }
}

}  // namespace

double analytic_score(const InterventionalDataset& d, std::span<const int> rows,
                      const BplParams& params, const LinearGaussian& model, int subsample,
                      Rng* rng) {
  AnalyticOut out;
  out.want_grad = false;
  analytic_core(d, rows, params, model, subsample, rng, out);
  return out.value;
}

GradientBundle analytic_gradient(const InterventionalDataset& d, std::span<const int> rows,
                                 const BplParams& params, const LinearGaussian& model,
                                 double lambda, int subsample, Rng* rng) {
  if (lambda < 0.0) throw std::invalid_argument("analytic_gradient: negative lambda");
  AnalyticOut core;
  core.want_grad = true;
  analytic_core(d, rows, params, model, subsample, rng, core);

  const int n = params.n();
  std::vector<double> count_d_theta;
  Mat count_d_logits;
  double count = expected_edge_count_and_grad(params, &count_d_theta, &count_d_logits);

  GradientBundle out;
  out.d_theta.assign(n, 0.0);
  for (int i = 0; i < n; ++i) out.d_theta[i] = core.d_theta[i] - lambda * count_d_theta[i];
  out.d_edge_logits = Mat(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j))
        out.d_edge_logits.at(i, j) = core.d_omega.at(i, j) - lambda * count_d_logits.at(i, j);
  out.d_model = std::move(core.d_model);
  out.diagnostics.objective_estimate = core.value - lambda * count;
  out.diagnostics.baseline = 0.0;
  out.diagnostics.grad_trace_variance = 0.0;
  out.diagnostics.variance_bound = 0.0;
  return out;
}

}  // namespace dagfit
