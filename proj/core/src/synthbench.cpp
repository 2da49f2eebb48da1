#include "dagfit/synthbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "dagfit/numeric.hpp"

namespace dagfit {

namespace {

constexpr double kLinearNoiseSigma = 0.5;
constexpr double kMlpNoiseVariance = 0.5;
constexpr int kMlpMechanismWidth = 100;
constexpr double kLeakySlope = 0.01;

constexpr std::uint64_t kTagOrderPerm = 1;
constexpr std::uint64_t kTagOrderTarget = 2;
constexpr std::uint64_t kTagOrderSamples = 3;
constexpr std::uint64_t kTagBenchGen = 1000;
constexpr std::uint64_t kTagBenchFit = 2000;

Permutation random_permutation(int n, Rng& rng) {
  Permutation p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.uniform_int(i + 1)]);
  return p;
}

std::vector<int> topo_order(const Adjacency& dag) {
  const int n = dag.n;
  std::vector<int> indeg(n, 0), order;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (dag.at(i, j)) ++indeg[j];
  std::vector<int> stack;
  for (int j = n - 1; j >= 0; --j)
    if (indeg[j] == 0) stack.push_back(j);
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    order.push_back(u);
    for (int j = 0; j < n; ++j)
      if (dag.at(u, j) && --indeg[j] == 0) stack.push_back(j);
  }
  if (static_cast<int>(order.size()) != n)
    throw std::invalid_argument("synthbench: ground-truth graph is cyclic");
  return order;
}

double gen_net_forward(const MlpNet& net, const double* x, int n) {
  std::vector<double> cur(x, x + n), next;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const MlpLayer& layer = net.layers[l];
    const bool head = l + 1 == net.layers.size();
    next.assign(layer.b.size(), 0.0);
    for (int o = 0; o < layer.w.rows; ++o) {
      double acc = layer.b[o];
      const double* wrow = layer.w.row(o);
      for (int i = 0; i < layer.w.cols; ++i) acc += wrow[i] * cur[i];
      next[o] = head ? acc : (acc >= 0.0 ? acc : kLeakySlope * acc);
    }
    cur.swap(next);
  }
  return cur[0];
}

InterventionalDataset generate(const GroundTruth& truth, int n_obs, int n_int_per_var, Rng& rng,
                               const GenOptions& opt) {
  if (n_obs < 0 || n_int_per_var < 0)
    throw std::invalid_argument("generate: negative sample count");
  if (!(opt.soft_alpha >= 0.0 && opt.soft_alpha <= 1.0))
    throw std::invalid_argument("generate: soft_alpha must be in [0, 1]");
  if (!(opt.int_variance > 0.0))
    throw std::invalid_argument("generate: intervention variance must be positive");
  const int n = truth.dag.n;
  const bool mlp = truth.mechanism == "mlp";
  std::vector<int> order = topo_order(truth.dag);
  const double int_sigma = std::sqrt(opt.int_variance);

  InterventionalDataset d;
  d.intervened.push_back({});
  if (n_int_per_var > 0)
    for (int j = 0; j < n; ++j) d.intervened.push_back({j});
  const int rows = n_obs + n * n_int_per_var;
  d.x = Mat(rows, n, 0.0);
  d.regime_of.assign(rows, 0);
  d.columns.resize(n);
  for (int j = 0; j < n; ++j) d.columns[j] = "x" + std::to_string(j);

  int r = 0;
  auto emit_row = [&](int regime, int target) {
    d.regime_of[r] = regime;
    double* x = d.x.row(r);
    for (int v : order) {
      // alpha == 1 takes the exogenous branch without burning a draw, so
      // perfect-intervention output is byte-identical to the default path.
      bool exogenous =
          v == target && (opt.soft_alpha == 1.0 || rng.bernoulli(opt.soft_alpha));
      if (exogenous) {
        x[v] = opt.int_mean + int_sigma * rng.normal();
      } else if (mlp) {
        x[v] = gen_net_forward(truth.mlp_nets[v], x, n) + truth.noise_scale[v] * rng.normal();
      } else {
        double mu = 0.0;
        for (int i = 0; i < n; ++i)
          if (truth.dag.at(i, v)) mu += truth.linear_weights.at(i, v) * x[i];
        x[v] = mu + truth.noise_scale[v] * rng.normal();
      }
    }
    ++r;
  };
  for (int k = 0; k < n_obs; ++k) emit_row(0, -1);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n_int_per_var; ++k) emit_row(1 + j, j);

  if (opt.standardize && rows > 0) {
    for (int j = 0; j < n; ++j) {
      KahanSum sum, sq;
      for (int i = 0; i < rows; ++i) sum.add(d.x.at(i, j));
      double mean = sum.value() / rows;
      for (int i = 0; i < rows; ++i) {
        double c = d.x.at(i, j) - mean;
        sq.add(c * c);
      }
      double sd = std::sqrt(sq.value() / rows);
      double inv = sd > 0.0 ? 1.0 / sd : 1.0;
      for (int i = 0; i < rows; ++i) d.x.at(i, j) = (d.x.at(i, j) - mean) * inv;
    }
  }
  d.validate();
  return d;
}

}  // namespace

GenOptions soften_interventions(double alpha, GenOptions base) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("soften_interventions: alpha must be in [0, 1]");
  base.soft_alpha = alpha;
  return base;
}

Adjacency sample_er_dag(int n, double edge_prob, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_er_dag: n must be positive");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0))
    throw std::invalid_argument("sample_er_dag: edge_prob must be in [0, 1]");
  Permutation perm = random_permutation(n, rng);
  Permutation pos = perm_inverse(perm);
  Adjacency dag(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(edge_prob)) {
        if (pos[i] < pos[j])
          dag.set(i, j, 1);
        else
          dag.set(j, i, 1);
      }
  return dag;
}

double edge_prob_for_degree(int n, double e) {
  if (n < 2) throw std::invalid_argument("edge_prob_for_degree: n must be >= 2");
  if (e < 0.0) throw std::invalid_argument("edge_prob_for_degree: negative degree");
  return std::min(1.0, 2.0 * e / static_cast<double>(n - 1));
}

GroundTruth make_linear_truth(int n, double edge_prob, Rng& rng) {
  GroundTruth t;
  t.dag = sample_er_dag(n, edge_prob, rng);
  t.mechanism = "linear";
  t.linear_weights = Mat(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (t.dag.at(i, j)) {
        double mag = rng.uniform_in(0.5, 2.0);
        t.linear_weights.at(i, j) = rng.bernoulli(0.5) ? mag : -mag;
      }
  t.noise_scale.assign(n, kLinearNoiseSigma);
  return t;
}

GroundTruth make_mlp_truth(int n, double edge_prob, Rng& rng) {
  GroundTruth t;
  t.dag = sample_er_dag(n, edge_prob, rng);
  t.mechanism = "mlp";
  t.noise_scale.assign(n, std::sqrt(kMlpNoiseVariance));
  for (int j = 0; j < n; ++j) {
    int fan_in = 0;
    for (int i = 0; i < n; ++i) fan_in += t.dag.at(i, j);
    MlpNet net;
    MlpLayer hidden;
    hidden.w = Mat(kMlpMechanismWidth, n, 0.0);
    hidden.b.assign(kMlpMechanismWidth, 0.0);
    double bound = std::sqrt(6.0 / (std::max(1, fan_in) + kMlpMechanismWidth));
    for (int o = 0; o < kMlpMechanismWidth; ++o)
      for (int i = 0; i < n; ++i)
        if (t.dag.at(i, j)) hidden.w.at(o, i) = rng.uniform_in(-bound, bound);
    MlpLayer head;
    head.w = Mat(1, kMlpMechanismWidth, 0.0);
    head.b.assign(1, 0.0);
    double head_bound = std::sqrt(6.0 / (kMlpMechanismWidth + 1));
    for (int i = 0; i < kMlpMechanismWidth; ++i)
      head.w.at(0, i) = rng.uniform_in(-head_bound, head_bound);
    net.layers.push_back(std::move(hidden));
    net.layers.push_back(std::move(head));
    t.mlp_nets.push_back(std::move(net));
  }
  return t;
}

InterventionalDataset gen_linear_dataset(const GroundTruth& truth, int n_obs, int n_int_per_var,
                                         Rng& rng, const GenOptions& opt) {
  if (truth.mechanism != "linear")
    throw std::invalid_argument("gen_linear_dataset: truth is not linear");
  return generate(truth, n_obs, n_int_per_var, rng, opt);
}

InterventionalDataset gen_mlp_dataset(const GroundTruth& truth, int n_obs, int n_int_per_var,
                                      Rng& rng, const GenOptions& opt) {
  if (truth.mechanism != "mlp") throw std::invalid_argument("gen_mlp_dataset: truth is not mlp");
  return generate(truth, n_obs, n_int_per_var, rng, opt);
}

InterventionalDataset corrupt_targets(const InterventionalDataset& d, double p_mislabel,
                                      Rng& rng) {
  if (!(p_mislabel >= 0.0 && p_mislabel <= 1.0))
    throw std::invalid_argument("corrupt_targets: p must be in [0, 1]");
  InterventionalDataset out = d;
  std::vector<int> int_regimes;
  for (int g = 0; g < d.n_regimes(); ++g)
    if (!d.intervened[g].empty()) int_regimes.push_back(g);
  if (int_regimes.size() < 2 || p_mislabel == 0.0) return out;
  std::vector<int> slot(d.n_regimes(), -1);
  for (std::size_t k = 0; k < int_regimes.size(); ++k) slot[int_regimes[k]] = static_cast<int>(k);
  for (int r = 0; r < d.n_rows(); ++r) {
    int g = d.regime_of[r];
    if (slot[g] < 0) continue;
    if (!rng.bernoulli(p_mislabel)) continue;
    int pick = rng.uniform_int(static_cast<int>(int_regimes.size()) - 1);
    if (pick >= slot[g]) ++pick;  // uniform over the other regimes
    out.regime_of[r] = int_regimes[pick];
  }
  return out;
}

namespace {

// Flat [theta | edge_logits] optimizer step shared by both ordering paths.
void ordering_adam_step(BplParams& params, const std::vector<double>& d_theta,
                        const Mat& d_omega, AdamState& adam, double lr) {
  const int n = params.n();
  std::vector<double> flat(n + static_cast<std::size_t>(n) * n);
  std::vector<double> grad(flat.size());
  std::size_t k = 0;
  for (int i = 0; i < n; ++i, ++k) {
    flat[k] = params.theta[i];
    grad[k] = d_theta[i];
  }
  for (std::size_t e = 0; e < params.edge_logits.v.size(); ++e, ++k) {
    flat[k] = params.edge_logits.v[e];
    grad[k] = d_omega.v[e];
  }
  adam_update(adam, grad, lr, flat);
  k = 0;
  for (int i = 0; i < n; ++i, ++k) params.theta[i] = flat[k];
  for (std::size_t e = 0; e < params.edge_logits.v.size(); ++e, ++k)
    params.edge_logits.v[e] = flat[k];
}

}  // namespace

OrderingResult run_ordering_task(int n, const std::string& estimator, int steps, double lr,
                                 int mc_samples, double drop_prob, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("ordering: n must be >= 2");
  if (steps < 1 || !(lr > 0.0)) throw std::invalid_argument("ordering: bad schedule");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0))
    throw std::invalid_argument("ordering: drop_prob must be in [0, 1)");
  const bool reinforce = estimator == "reinforce";
  if (!reinforce && estimator != "analytic")
    throw std::invalid_argument("ordering: estimator must be 'reinforce' or 'analytic'");
  if (reinforce && mc_samples < 2)
    throw std::invalid_argument("ordering: mc_samples must be >= 2");

  Rng root(seed);
  Rng perm_rng = root.derive(kTagOrderPerm);
  Permutation hidden = random_permutation(n, perm_rng);
  Permutation pos = perm_inverse(hidden);
  Adjacency truth(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && pos[i] < pos[j]) truth.set(i, j, 1);

  BplParams params = BplParams::init(n);
  AdamState adam(n + static_cast<std::size_t>(n) * n);
  const double inv_n2 = 1.0 / (static_cast<double>(n) * n);
  std::vector<double> d_theta(n);
  Mat d_omega(n, n);

  for (int step = 1; step <= steps; ++step) {
    Rng target_rng = root.derive(kTagOrderTarget, static_cast<std::uint64_t>(step));
    Adjacency target = truth;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (target.at(i, j) && target_rng.bernoulli(drop_prob)) target.set(i, j, 0);

    std::fill(d_theta.begin(), d_theta.end(), 0.0);
    d_omega.fill(0.0);
    if (reinforce) {
      Mat probs(n, n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (params.free_entry(i, j)) probs.at(i, j) = sigmoid(params.edge_logits.at(i, j));
      Rng sample_rng = root.derive(kTagOrderSamples, static_cast<std::uint64_t>(step));
      const int K = mc_samples;
      std::vector<double> f(K);
      std::vector<Permutation> perms(K);
      std::vector<Adjacency> masks(K);
      for (int k = 0; k < K; ++k) {
        perms[k] = sample_permutation(params.theta, sample_rng);
        Adjacency mask(n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (params.free_entry(i, j) && sample_rng.bernoulli(probs.at(i, j)))
              mask.set(i, j, 1);
        Adjacency a = adjacency_from_sample(perms[k], mask);
        int mismatches = 0;
        for (std::size_t e = 0; e < a.a.size(); ++e) mismatches += a.a[e] != target.a[e];
        f[k] = -inv_n2 * mismatches;
        masks[k] = std::move(mask);
      }
      double mean_f = 0.0;
      for (double v : f) mean_f += v;
      mean_f /= K;
      for (int k = 0; k < K; ++k) {
        double c = (f[k] - mean_f) / (K - 1);
        std::vector<double> s = pl_score(params.theta, perms[k]);
        for (int i = 0; i < n; ++i) d_theta[i] += c * s[i];
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (params.free_entry(i, j))
              d_omega.at(i, j) +=
                  c * (static_cast<double>(masks[k].at(i, j)) - probs.at(i, j));
      }
    } else {
      // E[f] = -1/n^2 sum_ij [E_ij (1 - 2 t_ij) + t_ij]; exact gradient.
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (!params.free_entry(i, j)) continue;
          double p = sigmoid(params.edge_logits.at(i, j));
          double q = sigmoid(params.theta[i] - params.theta[j]);
          double d_expected = -inv_n2 * (1.0 - 2.0 * static_cast<double>(target.at(i, j)));
          d_omega.at(i, j) = d_expected * p * (1.0 - p) * q;
          double through_q = d_expected * p * q * (1.0 - q);
          d_theta[i] += through_q;
          d_theta[j] -= through_q;
        }
    }
    ordering_adam_step(params, d_theta, d_omega, adam, lr);
  }

  OrderingResult res;
  res.kendall_tau = kendall_tau_partial(params.theta, truth);
  res.steps_run = steps;
  res.theta = params.theta;
  return res;
}

namespace {

std::string cell_name(const BenchCell& c) {
  std::string deg = format_double(c.degree);
  return c.mechanism + "_n" + std::to_string(c.n) + "_e" + deg;
}

}  // namespace

std::vector<BenchRow> run_benchmark(const std::vector<BenchCell>& cells,
                                    const TrainConfig& base_config) {
  std::vector<BenchRow> rows;
  Rng base(base_config.seed);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const BenchCell& cell = cells[ci];
    for (int s = 0; s < cell.seeds; ++s) {
      BenchRow row;
      row.cell = cell_name(cell);
      row.seed = static_cast<std::uint64_t>(s);
      double nan = std::numeric_limits<double>::quiet_NaN();
      row.shd = row.fdr = row.tpr = row.f1 = row.tau = nan;
      auto t0 = std::chrono::steady_clock::now();
      try {
        TrainConfig cfg = base_config;
        cfg.resolve();
        cfg.seed = base.derive(kTagBenchFit + ci, static_cast<std::uint64_t>(s)).seed();
        if (cell.mechanism == "ordering") {
          OrderingResult r = run_ordering_task(cell.n, cfg.estimator, cfg.steps,
                                               cfg.learning_rate, cfg.mc_samples, 0.3, cfg.seed);
          row.tau = r.kendall_tau;
        } else {
          Rng gen_rng = base.derive(kTagBenchGen + ci, static_cast<std::uint64_t>(s));
          double edge_prob = edge_prob_for_degree(cell.n, cell.degree);
          GroundTruth truth;
          InterventionalDataset data;
          if (cell.mechanism == "mlp") {
            truth = make_mlp_truth(cell.n, edge_prob, gen_rng);
            data = gen_mlp_dataset(truth, cell.n_obs, cell.n_int_per_var, gen_rng);
          } else if (cell.mechanism == "linear") {
            truth = make_linear_truth(cell.n, edge_prob, gen_rng);
            data = gen_linear_dataset(truth, cell.n_obs, cell.n_int_per_var, gen_rng);
          } else {
            throw std::invalid_argument("run_benchmark: unknown mechanism '" + cell.mechanism +
                                        "'");
          }
          FitResult res = fit(data, cfg);
          MetricReport m = confusion_metrics(res.extracted_graph, truth.dag);
          row.shd = m.shd;
          row.fdr = m.fdr;
          row.tpr = m.tpr;
          row.f1 = m.f1;
          row.tau = kendall_tau_partial(res.params.theta, truth.dag);
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void save_benchmark_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_benchmark_csv: cannot open " + path);
  out << "cell,seed,shd,fdr,tpr,f1,tau,seconds\n";
  auto emit = [&](const std::string& cell, const std::string& seed, const double* vals) {
    out << cell << ',' << seed;
    for (int c = 0; c < 6; ++c) out << ',' << format_double(vals[c]);
    out << '\n';
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<const BenchRow*>> by_cell;
  for (const auto& r : rows) {
    if (!by_cell.count(r.cell)) order.push_back(r.cell);
    by_cell[r.cell].push_back(&r);
    double vals[6] = {r.shd, r.fdr, r.tpr, r.f1, r.tau, r.seconds};
    emit(r.cell, std::to_string(r.seed), vals);
  }
  for (const auto& cell : order) {
    double mean[6] = {0, 0, 0, 0, 0, 0}, var[6] = {0, 0, 0, 0, 0, 0};
    int count = 0;
    for (const BenchRow* r : by_cell[cell]) {
      if (r->failed) continue;
      double vals[6] = {r->shd, r->fdr, r->tpr, r->f1, r->tau, r->seconds};
      ++count;
      for (int c = 0; c < 6; ++c) mean[c] += vals[c];
    }
    if (count == 0) continue;
    for (int c = 0; c < 6; ++c) mean[c] /= count;
    int used = 0;
    for (const BenchRow* r : by_cell[cell]) {
      if (r->failed) continue;
      double vals[6] = {r->shd, r->fdr, r->tpr, r->f1, r->tau, r->seconds};
      ++used;
      for (int c = 0; c < 6; ++c) var[c] += (vals[c] - mean[c]) * (vals[c] - mean[c]);
    }
    double sd[6];
    for (int c = 0; c < 6; ++c) sd[c] = used > 1 ? std::sqrt(var[c] / (used - 1)) : 0.0;
    emit(cell, "mean", mean);
    emit(cell, "std", sd);
  }
}

}  // namespace dagfit
