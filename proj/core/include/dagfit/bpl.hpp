#pragma once

#include <vector>

#include "dagfit/graph.hpp"
#include "dagfit/matrix.hpp"
#include "dagfit/rng.hpp"

namespace dagfit {

// Distribution over DAGs: node scores theta drive a Plackett-Luce ordering,
// edge logits drive independent Bernoulli gates, and an edge exists when its
// gate is on and its source precedes its target.
struct BplParams {
  std::vector<double> theta;
  Mat edge_logits;      // p_ij = sigmoid(edge_logits_ij) on free entries
  Adjacency forbidden;  // 1 = edge pinned off, excluded from gradients; diagonal always 1

  int n() const { return static_cast<int>(theta.size()); }
  bool free_entry(int i, int j) const { return i != j && !forbidden.at(i, j); }
  double edge_prob(int i, int j) const;

  // theta = 0 (or caller-supplied node scores), edge probabilities 0.1:
  // a near-sparse start that leaves no sigmoid saturated.
  static BplParams init(int n, const std::vector<double>* theta0 = nullptr);
  void validate() const;
};

struct DagSample {
  Permutation perm;
  Adjacency mask;       // Bernoulli gates
  Adjacency adjacency;  // gates ∧ ordering; acyclic by construction
};

// Descending argsort of theta_i + Gumbel noise; identical in law to
// sequential categorical sampling without replacement.
Permutation sample_permutation(const std::vector<double>& theta, Rng& rng);

double pl_log_prob(const std::vector<double>& theta, const Permutation& p);

// d log p / d theta_{p_m} = 1 - sum_{k<=m} exp(theta_{p_m}) / Z_k,
// Z_k = sum_{u>=k} exp(theta_{p_u}). O(n) via prefix sums of 1/Z_k.
// Entries sum to zero.
std::vector<double> pl_score(const std::vector<double>& theta, const Permutation& p);

Adjacency sample_edges(const BplParams& params, Rng& rng);

// Entry-wise mask_ij - p_ij on free entries, exactly 0 elsewhere.
Mat bernoulli_score(const Adjacency& mask, const BplParams& params);

DagSample sample_dag(const BplParams& params, Rng& rng);

// Pr(i precedes j) under Plackett-Luce(theta).
double prob_precedes(const std::vector<double>& theta, int i, int j);

// Pr(i precedes j AND k precedes j).
double prob_joint_precedes(const std::vector<double>& theta, int i, int j, int k);

// E[a_ij] = p_ij * Pr(i precedes j); zero on diagonal and forbidden entries.
Mat expected_edge_matrix(const BplParams& params);

// Cov(a_ij, a_kj) for distinct i, k, j; always >= 0.
double edge_covariance(const BplParams& params, int i, int k, int j);

// Value = sum of E[a_ij] over free entries. Optional analytic gradients.
double expected_edge_count_and_grad(const BplParams& params,
                                    std::vector<double>* d_theta = nullptr,
                                    Mat* d_edge_logits = nullptr);

// E over permutations of the per-stage Hessian trace, computed exactly by a
// DP over remaining-item subsets (the per-stage closed form depends on the
// arrangement for n >= 3, so the expectation is the well-defined quantity;
// it equals E||pl_score||^2 and is bounded by n - 1). O(n 2^n); n <= 20.
double fisher_trace(const std::vector<double>& theta);

}  // namespace dagfit
