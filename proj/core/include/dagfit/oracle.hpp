#pragma once

#include <span>
#include <vector>

#include "dagfit/bpl.hpp"
#include "dagfit/conditionals.hpp"
#include "dagfit/dataset.hpp"
#include "dagfit/estimators.hpp"

namespace dagfit {

// Brute-force references for small n. Everything here enumerates all n!
// permutations (edge gates factor out per node), so the budget is a hard cap.
struct EnumerationBudget {
  int max_nodes = 6;
};

struct PairStats {
  int n = 0;
  double total_prob = 0.0;       // sums to 1 up to rounding
  Mat precedes;                  // precedes.at(i, j) = Pr(i before j)
  std::vector<double> joint;     // Pr(i before j and k before j)

  double joint_at(int i, int k, int j) const {
    return joint[(static_cast<std::size_t>(i) * n + k) * n + j];
  }
};

PairStats exact_pair_stats(const std::vector<double>& theta, EnumerationBudget budget = {});

Mat exact_expected_adjacency(const BplParams& params, EnumerationBudget budget = {});

// E[f] over the full (permutation, gates) space. Gates are independent given
// the permutation, so each node sums over subsets of its eligible
// predecessors instead of whole masks.
double exact_expected_score(const InterventionalDataset& d, std::span<const int> rows,
                            const BplParams& params, const LinearGaussian& model,
                            EnumerationBudget budget = {});

// Central finite differences of exact_expected_score over every coordinate
// (step 1e-5). diagnostics.objective_estimate holds the center value.
GradientBundle exact_gradient(const InterventionalDataset& d, std::span<const int> rows,
                              const BplParams& params, const LinearGaussian& model,
                              EnumerationBudget budget = {});

}  // namespace dagfit
