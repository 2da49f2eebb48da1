#include "dagfit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dagfit/numeric.hpp"
#include "dagfit/objective.hpp"

namespace dagfit {

namespace {

void check_budget(int n, const EnumerationBudget& budget, const char* who) {
  if (n > budget.max_nodes)
    throw std::invalid_argument(std::string(who) + ": n exceeds the enumeration budget");
  if (n < 1) throw std::invalid_argument(std::string(who) + ": empty parameter vector");
}

// Calls fn(perm, weight) for every permutation; weights sum to 1.
template <typename Fn>
void for_each_permutation(const std::vector<double>& theta, Fn&& fn) {
  const int n = static_cast<int>(theta.size());
  Permutation perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  do {
    fn(perm, std::exp(pl_log_prob(theta, perm)));
  } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace

PairStats exact_pair_stats(const std::vector<double>& theta, EnumerationBudget budget) {
  const int n = static_cast<int>(theta.size());
  check_budget(n, budget, "exact_pair_stats");
  PairStats st;
  st.n = n;
  st.precedes = Mat(n, n, 0.0);
  st.joint.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  KahanSum total;
  for_each_permutation(theta, [&](const Permutation& perm, double w) {
    total.add(w);
    Permutation pos = perm_inverse(perm);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || pos[i] >= pos[j]) continue;
        st.precedes.at(i, j) += w;
        for (int k = 0; k < n; ++k)
          if (k != j && pos[k] < pos[j])
            st.joint[(static_cast<std::size_t>(i) * n + k) * n + j] += w;
      }
  });
  st.total_prob = total.value();
  return st;
}

Mat exact_expected_adjacency(const BplParams& params, EnumerationBudget budget) {
  const int n = params.n();
  check_budget(n, budget, "exact_expected_adjacency");
  Mat e(n, n, 0.0);
  for_each_permutation(params.theta, [&](const Permutation& perm, double w) {
    Permutation pos = perm_inverse(perm);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && pos[i] < pos[j]) e.at(i, j) += w * params.edge_prob(i, j);
  });
  return e;
}

double exact_expected_score(const InterventionalDataset& d, std::span<const int> rows,
                            const BplParams& params, const LinearGaussian& model,
                            EnumerationBudget budget) {
  const int n = params.n();
  check_budget(n, budget, "exact_expected_score");
  if (d.n_vars() != n || model.n() != n)
    throw std::invalid_argument("exact_expected_score: dimension mismatch");
  if (rows.empty()) return 0.0;
  const double B = static_cast<double>(rows.size());
  const ConditionalModel as_variant = model;

  std::vector<std::vector<std::uint8_t>> excluded(d.n_regimes());
  for (int g = 0; g < d.n_regimes(); ++g) excluded[g] = d.excluded_mask(g);
  const std::vector<double> regime_weight = regime_weights(d);

  // mean_ll[j][parents-bitmask], built on demand; bitmask fits in n <= 6 bits.
  std::vector<std::vector<double>> memo(n);
  const double unset = std::numeric_limits<double>::quiet_NaN();
  for (int j = 0; j < n; ++j) memo[j].assign(std::size_t{1} << n, unset);
  auto mean_ll = [&](int j, unsigned bits) {
    double& slot = memo[j][bits];
    if (!std::isnan(slot)) return slot;
    std::vector<std::uint8_t> parent_mask(n, 0);
    for (int i = 0; i < n; ++i)
      if (bits & (1u << i)) parent_mask[i] = 1;
    KahanSum acc;
    for (int r : rows) {
      const int regime = d.regime_of[r];
      if (excluded[regime][j]) continue;
      acc.add(regime_weight[regime] * loglik_node(as_variant, d.x.row(r), n, parent_mask.data(), j));
    }
    slot = acc.value() / B;
    return slot;
  };

  KahanSum total;
  std::vector<int> pred;
  for_each_permutation(params.theta, [&](const Permutation& perm, double w) {
    Permutation pos = perm_inverse(perm);
    for (int j = 0; j < n; ++j) {
      pred.clear();
      for (int i = 0; i < n; ++i)
        if (i != j && pos[i] < pos[j] && params.free_entry(i, j)) pred.push_back(i);
      const unsigned subsets = 1u << pred.size();
      for (unsigned sub = 0; sub < subsets; ++sub) {
        double prob = 1.0;
        unsigned bits = 0;
        for (std::size_t t = 0; t < pred.size(); ++t) {
          double p = params.edge_prob(pred[t], j);
          if (sub & (1u << t)) {
            prob *= p;
            bits |= 1u << pred[t];
          } else {
            prob *= 1.0 - p;
          }
        }
        total.add(w * prob * mean_ll(j, bits));
      }
    }
  });
  return total.value();
}

GradientBundle exact_gradient(const InterventionalDataset& d, std::span<const int> rows,
                              const BplParams& params, const LinearGaussian& model,
                              EnumerationBudget budget) {
  const int n = params.n();
  check_budget(n, budget, "exact_gradient");
  constexpr double kStep = 1e-5;
  auto eval = [&](const BplParams& p, const LinearGaussian& m) {
    return exact_expected_score(d, rows, p, m, budget);
  };
  auto central = [&](double& coord) {
    double saved = coord;
    coord = saved + kStep;
    double hi = eval(params, model);
    coord = saved - kStep;
    double lo = eval(params, model);
    coord = saved;
    return (hi - lo) / (2.0 * kStep);
  };
  // Finite differences mutate in place through these aliases; the caller's
  // objects are back to their original values on return.
  auto& mut_params = const_cast<BplParams&>(params);
  auto& mut_model = const_cast<LinearGaussian&>(model);

  GradientBundle out;
  out.d_theta.assign(n, 0.0);
  out.d_edge_logits = Mat(n, n, 0.0);
  LinearGaussian d_lin = LinearGaussian::init(n);
  for (int i = 0; i < n; ++i) out.d_theta[i] = central(mut_params.theta[i]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (params.free_entry(i, j))
        out.d_edge_logits.at(i, j) = central(mut_params.edge_logits.at(i, j));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) d_lin.weights.at(i, j) = central(mut_model.weights.at(i, j));
  for (int j = 0; j < n; ++j) d_lin.bias[j] = central(mut_model.bias[j]);
  for (int j = 0; j < n; ++j) d_lin.log_scale[j] = central(mut_model.log_scale[j]);
  out.d_model = std::move(d_lin);
  out.diagnostics.objective_estimate = eval(params, model);
  out.diagnostics.baseline = 0.0;
  out.diagnostics.grad_trace_variance = 0.0;
  out.diagnostics.variance_bound = 0.0;
  return out;
}

}  // namespace dagfit
