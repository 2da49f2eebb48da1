#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dagfit/conditionals.hpp"
#include "dagfit/dataset.hpp"
#include "dagfit/graph.hpp"
#include "dagfit/rng.hpp"
#include "dagfit/trainer.hpp"

namespace dagfit {

// Ground-truth generator: an acyclic graph plus one mechanism per node.
// Linear nodes are weighted parent sums; mlp nodes are one-hidden-layer
// networks whose non-parent input columns are exactly zero.
struct GroundTruth {
  Adjacency dag;
  std::string mechanism;            // linear | mlp
  Mat linear_weights;               // weights.at(i, j) = effect of i on j
  std::vector<double> noise_scale;  // per-node observational sigma
  std::vector<MlpNet> mlp_nets;     // one per node when mechanism == mlp
  std::string family = "erdos-renyi";
  double degree = 0.0;  // expected edges per node, metadata only
  std::uint64_t seed = 0;
};

struct GenOptions {
  double int_mean = 0.0;
  double int_variance = 0.1;
  double soft_alpha = 1.0;  // 1 = perfect interventions, 0 = observational
  bool standardize = true;
};

// Intervened samples draw the exogenous mechanism with probability alpha and
// the observational one otherwise, realizing the mixture density.
GenOptions soften_interventions(double alpha, GenOptions base = {});

// Undirected ER(n, edge_prob) skeleton oriented along a uniformly random
// permutation; acyclic by construction.
Adjacency sample_er_dag(int n, double edge_prob, Rng& rng);

// Density "e expected edges per node" as an ER probability: 2e / (n - 1).
double edge_prob_for_degree(int n, double e);

// Linear weights are uniform on +-[0.5, 2.0]; observational noise sigma 0.5.
GroundTruth make_linear_truth(int n, double edge_prob, Rng& rng);
// One hidden layer of 100 units per node; noise variance 0.5.
GroundTruth make_mlp_truth(int n, double edge_prob, Rng& rng);

// Ancestral sampling: regime 0 observational, one single-target regime per
// variable. Columns are standardized with pooled mean and population std.
InterventionalDataset gen_linear_dataset(const GroundTruth& truth, int n_obs, int n_int_per_var,
                                         Rng& rng, const GenOptions& opt = {});
InterventionalDataset gen_mlp_dataset(const GroundTruth& truth, int n_obs, int n_int_per_var,
                                      Rng& rng, const GenOptions& opt = {});

// Each interventional row switches to a uniformly random different
// interventional regime with probability p. Values are untouched.
InterventionalDataset corrupt_targets(const InterventionalDataset& d, double p_mislabel,
                                      Rng& rng);

// Ordering recovery against a noisy complete-DAG target: each step drops
// every true edge with probability drop_prob and rewards -mean((A - T)^2).
// estimator: "reinforce" samples K DAGs; "analytic" ascends the closed-form
// expectation. Returns Kendall tau of theta against the hidden order.
struct OrderingResult {
  double kendall_tau = 0.0;
  int steps_run = 0;
  std::vector<double> theta;
};
OrderingResult run_ordering_task(int n, const std::string& estimator, int steps, double lr,
                                 int mc_samples, double drop_prob, std::uint64_t seed);

struct BenchCell {
  int n = 10;
  double degree = 1.0;              // expected edges per node
  std::string mechanism = "linear";  // linear | mlp | ordering
  int seeds = 3;
  int n_obs = 10000;
  int n_int_per_var = 500;
};

struct BenchRow {
  std::string cell;
  std::uint64_t seed = 0;
  double shd = 0.0, fdr = 0.0, tpr = 0.0, f1 = 0.0, tau = 0.0, seconds = 0.0;
  bool failed = false;
  std::string error;
};

// One generate/fit/score run per (cell, seed). Seeds derive independently,
// so row values do not depend on execution order; failures are recorded in
// their row and the sweep continues.
std::vector<BenchRow> run_benchmark(const std::vector<BenchCell>& cells,
                                    const TrainConfig& base_config);

// Per-seed rows as listed, then per-cell "mean" and "std" rows over the
// seeds that succeeded.
void save_benchmark_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace dagfit
