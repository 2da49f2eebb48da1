#pragma once

#include <span>

#include "dagfit/bpl.hpp"
#include "dagfit/conditionals.hpp"
#include "dagfit/dataset.hpp"

namespace dagfit {

// Per-regime row weight: (total rows) / (rows in that regime), 0 for regimes
// with no rows. Weighting rows this way makes a batch mean an unbiased
// estimate of the sum over regimes of the per-regime expected log-likelihood,
// so every regime counts equally no matter how many samples it has. A
// single-regime dataset gets weight 1 everywhere.
std::vector<double> regime_weights(const InterventionalDataset& d);

// Mean over batch rows of the regime-weighted per-row sum of log-likelihoods
// over the row's non-intervened nodes, under the sampled DAG's factorization.
// Mean (not sum) keeps the sparsity weight comparable across batch sizes;
// regime weights keep it comparable across sample-volume imbalances.
double interventional_score(const InterventionalDataset& d, std::span<const int> rows,
                            const Adjacency& adjacency, const ConditionalModel& model);

// interventional_score minus lambda * expected free-edge count. The penalty
// is the closed-form expectation, not the sampled edge count.
double regularized_objective(const InterventionalDataset& d, std::span<const int> rows,
                             const Adjacency& adjacency, const ConditionalModel& model,
                             const BplParams& params, double lambda);

}  // namespace dagfit
