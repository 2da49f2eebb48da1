#include "dagfit/bpl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "dagfit/numeric.hpp"

namespace dagfit {

double BplParams::edge_prob(int i, int j) const {
  if (!free_entry(i, j)) return 0.0;
  return sigmoid(edge_logits.at(i, j));
}

BplParams BplParams::init(int n, const std::vector<double>* theta0) {
  BplParams p;
  p.theta.assign(n, 0.0);
  if (theta0) {
    if (static_cast<int>(theta0->size()) != n)
      throw std::invalid_argument("BplParams::init: theta0 size mismatch");
    p.theta = *theta0;
  }
  const double logit_01 = std::log(0.1 / 0.9);
  p.edge_logits = Mat(n, n, logit_01);
  p.forbidden = Adjacency(n);
  for (int i = 0; i < n; ++i) p.forbidden.set(i, i, 1);
  p.validate();
  return p;
}

void BplParams::validate() const {
  const int nn = n();
  if (edge_logits.rows != nn || edge_logits.cols != nn || forbidden.n != nn)
    throw std::invalid_argument("BplParams: shape mismatch");
  for (int i = 0; i < nn; ++i)
    if (!forbidden.at(i, i)) throw std::invalid_argument("BplParams: diagonal must be forbidden");
  for (double t : theta)
    if (!std::isfinite(t)) throw std::invalid_argument("BplParams: non-finite theta");
  for (double w : edge_logits.v)
    if (!std::isfinite(w)) throw std::invalid_argument("BplParams: non-finite edge logit");
}

Permutation sample_permutation(const std::vector<double>& theta, Rng& rng) {
  const int n = static_cast<int>(theta.size());
  std::vector<std::pair<double, int>> keys(n);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(theta[i])) throw std::invalid_argument("sample_permutation: non-finite logit");
    keys[i] = {theta[i] + rng.gumbel(), i};
  }
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // unreachable in practice; pins determinism
  });
  Permutation p(n);
  for (int k = 0; k < n; ++k) p[k] = keys[k].second;
  return p;
}

double pl_log_prob(const std::vector<double>& theta, const Permutation& p) {
  const int n = static_cast<int>(theta.size());
  if (!is_valid_permutation(p) || static_cast<int>(p.size()) != n)
    throw std::invalid_argument("pl_log_prob: invalid permutation");
  if (n == 0) return 0.0;
  double mx = *std::max_element(theta.begin(), theta.end());
  // Suffix logsumexp over positions k..n-1 of theta reordered by p.
  double lp = 0.0;
  double suffix = 0.0;  // sum of exp(theta_u - mx) over u in positions k..n-1
  std::vector<double> log_z(n);
  for (int k = n - 1; k >= 0; --k) {
    suffix += std::exp(theta[p[k]] - mx);
    log_z[k] = mx + std::log(suffix);
  }
  for (int k = 0; k < n; ++k) lp += theta[p[k]] - log_z[k];
  return lp;
}

std::vector<double> pl_score(const std::vector<double>& theta, const Permutation& p) {
  const int n = static_cast<int>(theta.size());
  if (!is_valid_permutation(p) || static_cast<int>(p.size()) != n)
    throw std::invalid_argument("pl_score: invalid permutation");
  std::vector<double> score(n, 0.0);
  if (n == 0) return score;
  double mx = *std::max_element(theta.begin(), theta.end());
  std::vector<double> e(n);
  for (int i = 0; i < n; ++i) e[i] = std::exp(theta[i] - mx);
  // z[k] = sum over positions u >= k of e[p_u]; shift by mx cancels in e/z.
  std::vector<double> z(n);
  double suffix = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    suffix += e[p[k]];
    z[k] = suffix;
  }
  double inv_z_prefix = 0.0;
  for (int m = 0; m < n; ++m) {
    inv_z_prefix += 1.0 / z[m];
    score[p[m]] = 1.0 - e[p[m]] * inv_z_prefix;
  }
  return score;
}

Adjacency sample_edges(const BplParams& params, Rng& rng) {
  const int n = params.n();
  Adjacency mask(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j) && rng.bernoulli(sigmoid(params.edge_logits.at(i, j))))
        mask.set(i, j, 1);
  return mask;
}

Mat bernoulli_score(const Adjacency& mask, const BplParams& params) {
  const int n = params.n();
  if (mask.n != n) throw std::invalid_argument("bernoulli_score: dimension mismatch");
  Mat g(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j))
        g.at(i, j) = static_cast<double>(mask.at(i, j)) - sigmoid(params.edge_logits.at(i, j));
  return g;
}

DagSample sample_dag(const BplParams& params, Rng& rng) {
  DagSample s;
  s.perm = sample_permutation(params.theta, rng);
  s.mask = sample_edges(params, rng);
  s.adjacency = adjacency_from_sample(s.perm, s.mask);
  return s;
}

double prob_precedes(const std::vector<double>& theta, int i, int j) {
  if (i == j) throw std::invalid_argument("prob_precedes: i == j");
  return sigmoid(theta[i] - theta[j]);
}

double prob_joint_precedes(const std::vector<double>& theta, int i, int j, int k) {
  if (i == j || i == k || j == k) throw std::invalid_argument("prob_joint_precedes: indices not distinct");
  double mx = std::max(theta[i], std::max(theta[j], theta[k]));
  double ei = std::exp(theta[i] - mx);
  double ej = std::exp(theta[j] - mx);
  double ek = std::exp(theta[k] - mx);
  double factor = 1.0 + ej / (ei + ej + ek);
  return prob_precedes(theta, i, j) * prob_precedes(theta, k, j) * factor;
}

Mat expected_edge_matrix(const BplParams& params) {
  const int n = params.n();
  Mat e(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j))
        e.at(i, j) = sigmoid(params.edge_logits.at(i, j)) * prob_precedes(params.theta, i, j);
  return e;
}

double edge_covariance(const BplParams& params, int i, int k, int j) {
  if (i == k || i == j || k == j) throw std::invalid_argument("edge_covariance: indices not distinct");
  const auto& th = params.theta;
  double mx = std::max(th[i], std::max(th[j], th[k]));
  double ei = std::exp(th[i] - mx);
  double ej = std::exp(th[j] - mx);
  double ek = std::exp(th[k] - mx);
  return params.edge_prob(i, j) * params.edge_prob(k, j) * prob_precedes(th, i, j) *
         prob_precedes(th, k, j) * ej / (ei + ej + ek);
}

double expected_edge_count_and_grad(const BplParams& params, std::vector<double>* d_theta,
                                    Mat* d_edge_logits) {
  const int n = params.n();
  if (d_theta) d_theta->assign(n, 0.0);
  if (d_edge_logits) *d_edge_logits = Mat(n, n, 0.0);
  KahanSum total;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!params.free_entry(i, j)) continue;
      double p = sigmoid(params.edge_logits.at(i, j));
      double q = prob_precedes(params.theta, i, j);
      total.add(p * q);
      if (d_edge_logits) d_edge_logits->at(i, j) = p * (1.0 - p) * q;
      if (d_theta) {
        double dq = q * (1.0 - q);
        (*d_theta)[i] += p * dq;
        (*d_theta)[j] -= p * dq;
      }
    }
  return total.value();
}

double fisher_trace(const std::vector<double>& theta) {
  const int n = static_cast<int>(theta.size());
  if (n <= 1) return 0.0;
  if (n > 20) throw std::invalid_argument("fisher_trace: exact DP limited to n <= 20");
  double mx = *std::max_element(theta.begin(), theta.end());
  std::vector<double> e(n), e2(n);
  for (int i = 0; i < n; ++i) {
    e[i] = std::exp(theta[i] - mx);
    e2[i] = e[i] * e[i];
  }
  // prob[S] = probability that S is exactly the remaining-item set at some
  // stage. Each subset is visited after all its supersets (supersets have
  // larger mask values), so a single descending pass suffices.
  const std::uint32_t full = (1u << n) - 1u;
  std::vector<double> prob(full + 1u, 0.0);
  prob[full] = 1.0;
  KahanSum trace;
  for (std::uint32_t s = full; s >= 1u; --s) {
    double ps = prob[s];
    if (ps == 0.0) continue;
    double z = 0.0, z2 = 0.0;
    for (std::uint32_t bits = s; bits; bits &= bits - 1u) {
      int u = std::countr_zero(bits);
      z += e[u];
      z2 += e2[u];
    }
    trace.add(ps * (1.0 - z2 / (z * z)));
    for (std::uint32_t bits = s; bits; bits &= bits - 1u) {
      int u = std::countr_zero(bits);
      prob[s & ~(1u << u)] += ps * e[u] / z;
    }
  }
  return trace.value();
}

}  // namespace dagfit
