#include "dagfit/objective.hpp"

#include <stdexcept>

#include "dagfit/numeric.hpp"

namespace dagfit {

std::vector<double> regime_weights(const InterventionalDataset& d) {
  std::vector<int> counts(d.n_regimes(), 0);
  for (int r : d.regime_of) {
    if (r < 0 || r >= d.n_regimes())
      throw std::invalid_argument("regime_weights: unknown regime label");
    ++counts[r];
  }
  std::vector<double> w(d.n_regimes(), 0.0);
  for (int g = 0; g < d.n_regimes(); ++g)
    if (counts[g] > 0) w[g] = static_cast<double>(d.n_rows()) / static_cast<double>(counts[g]);
  return w;
}

double interventional_score(const InterventionalDataset& d, std::span<const int> rows,
                            const Adjacency& adjacency, const ConditionalModel& model) {
  const int n = d.n_vars();
  if (adjacency.n != n) throw std::invalid_argument("interventional_score: dimension mismatch");
  if (rows.empty()) return 0.0;
  const std::vector<double> weight = regime_weights(d);
  // Column j of the adjacency = parent mask of node j.
  std::vector<std::uint8_t> parent_mask(n);
  KahanSum total;
  for (int r : rows) {
    if (r < 0 || r >= d.n_rows()) throw std::invalid_argument("interventional_score: row out of range");
    int regime = d.regime_of[r];
    if (regime < 0 || regime >= d.n_regimes())
      throw std::invalid_argument("interventional_score: unknown regime label");
    const auto& excluded = d.intervened[regime];
    const double* x = d.x.row(r);
    KahanSum row_sum;
    std::size_t e = 0;
    for (int j = 0; j < n; ++j) {
      while (e < excluded.size() && excluded[e] < j) ++e;
      if (e < excluded.size() && excluded[e] == j) continue;
      for (int i = 0; i < n; ++i) parent_mask[i] = adjacency.at(i, j);
      row_sum.add(loglik_node(model, x, n, parent_mask.data(), j));
    }
    total.add(weight[regime] * row_sum.value());
  }
  return total.value() / static_cast<double>(rows.size());
}

double regularized_objective(const InterventionalDataset& d, std::span<const int> rows,
                             const Adjacency& adjacency, const ConditionalModel& model,
                             const BplParams& params, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("regularized_objective: negative lambda");
  double score = interventional_score(d, rows, adjacency, model);
  return score - lambda * expected_edge_count_and_grad(params);
}

}  // namespace dagfit
