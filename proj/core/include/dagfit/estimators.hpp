#pragma once

#include <span>
#include <string>

#include "dagfit/bpl.hpp"
#include "dagfit/conditionals.hpp"
#include "dagfit/dataset.hpp"

namespace dagfit {

struct EstimatorDiagnostics {
  double objective_estimate = 0.0;   // penalized objective (estimate or exact)
  double baseline = 0.0;             // within-step average reward
  double grad_trace_variance = 0.0;  // per-sample score-function estimator
  double variance_bound = 0.0;       // max_k (f_k - m)^2 * (n + sum p(1-p))
};

struct GradientBundle {
  std::vector<double> d_theta;
  Mat d_edge_logits;          // exactly 0 on forbidden entries
  ConditionalModel d_model;   // same shape as the model
  EstimatorDiagnostics diagnostics;
};

// Score-function ascent direction from K sampled DAGs with the within-step
// average baseline. The centered sum is normalized by K-1, which makes the
// estimator exactly unbiased (it is algebraically the leave-one-out form).
// The sparsity penalty enters analytically, once per step. Sample k draws
// from rng.derive(k), so results never depend on the thread count.
GradientBundle reinforce_step(const InterventionalDataset& d, std::span<const int> rows,
                              const BplParams& params, const ConditionalModel& model, int K,
                              double lambda, Rng& rng, bool use_baseline = true);

// Exact expected score for the linear-Gaussian family: squared residual
// against the expected parents, per-edge variance, and the pairwise
// covariance cross term. subsample > 0 evaluates the cross term on that many
// uniformly drawn target nodes, rescaled by n/subsample (unbiased); rng is
// required only then.
double analytic_score(const InterventionalDataset& d, std::span<const int> rows,
                      const BplParams& params, const LinearGaussian& model, int subsample = 0,
                      Rng* rng = nullptr);

// Exact partial derivatives of analytic_score (minus the penalty) w.r.t.
// theta, edge logits, W, bias, log_scale.
GradientBundle analytic_gradient(const InterventionalDataset& d, std::span<const int> rows,
                                 const BplParams& params, const LinearGaussian& model,
                                 double lambda, int subsample = 0, Rng* rng = nullptr);

// Cross-term target-node count used when subsampling: ceil(n^(2/3)).
int cross_term_subsample_count(int n);

struct VarianceReport {
  double trace_variance = 0.0;   // the use_baseline variant's trace
  double trace_with = 0.0;       // across-repeat covariance trace, baselined
  double trace_without = 0.0;    // same, raw-reward estimator
  double bound = 0.0;            // max (f-m)^2 (n + sum p(1-p)), for the baselined variant
  double bound_without = 0.0;    // max f^2 (n + sum p(1-p)), for the raw variant
  double ratio_with_over_without = 0.0;
  int K = 0;
  int repeats = 0;
};

// Recomputes the (unpenalized) score-function estimator `repeats` times with
// independent randomness; with- and without-baseline variants share each
// repeat's sample pool.
VarianceReport variance_report(const InterventionalDataset& d, std::span<const int> rows,
                               const BplParams& params, const ConditionalModel& model, int K,
                               int repeats, bool use_baseline, Rng& rng);

struct VarianceRow {
  int step = 0;
  double trace_variance = 0.0;
  double bound = 0.0;
  int baseline_flag = 1;
  int K = 0;
};

void save_variance_csv(const std::string& path, const std::vector<VarianceRow>& rows);

}  // namespace dagfit
