#include <cmath>
#include <vector>

#include "dagfit/estimators.hpp"
#include "dagfit/numeric.hpp"
#include "dagfit/objective.hpp"
#include "dagfit/oracle.hpp"
#include "dagfit/threading.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dagfit;

namespace {

LinearGaussian random_linear(int n, Rng& rng) {
  LinearGaussian m = LinearGaussian::init(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) m.weights.at(i, j) = 0.6 * rng.normal();
  for (int j = 0; j < n; ++j) {
    m.bias[j] = 0.4 * rng.normal();
    m.log_scale[j] = 0.25 * rng.normal();
  }
  return m;
}

double penalized_score(const InterventionalDataset& d, const std::vector<int>& rows,
                       const BplParams& params, const LinearGaussian& model, double lambda) {
  return analytic_score(d, rows, params, model) -
         lambda * expected_edge_count_and_grad(params);
}

}  // namespace

TEST_CASE("reinforce_step rejects degenerate sample counts") {
  Rng rng(3);
  InterventionalDataset d = testutil::random_dataset(3, rng);
  BplParams params = testutil::random_params(3, rng);
  ConditionalModel model = random_linear(3, rng);
  std::vector<int> rows = testutil::all_rows(d);
  CHECK_THROWS_AS(reinforce_step(d, rows, params, model, 1, 0.0, rng),
                  std::invalid_argument);
}

TEST_CASE("constant rewards zero out the score-function direction") {
  Rng rng(5);
  InterventionalDataset d = testutil::random_dataset(4, rng);
  BplParams params = testutil::random_params(4, rng);
  ConditionalModel model = LinearGaussian::init(4);  // W = 0: f ignores the DAG
  std::vector<int> rows = testutil::all_rows(d);

  GradientBundle g = reinforce_step(d, rows, params, model, 16, 0.0, rng);
  for (double v : g.d_theta) CHECK(std::abs(v) <= 1e-12);
  for (double v : g.d_edge_logits.v) CHECK(std::abs(v) <= 1e-12);
  CHECK(g.diagnostics.grad_trace_variance <= 1e-20);
}

TEST_CASE("forbidden entries never receive gradient") {
  Rng rng(7);
  InterventionalDataset d = testutil::random_dataset(4, rng);
  BplParams params = testutil::random_params(4, rng, true);  // forbids 0 -> 3
  LinearGaussian model = random_linear(4, rng);

  std::vector<int> rows = testutil::all_rows(d);
  GradientBundle r = reinforce_step(d, rows, params, ConditionalModel(model), 32, 0.8, rng);
  CHECK(r.d_edge_logits.at(0, 3) == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(r.d_edge_logits.at(i, i) == 0.0);

  GradientBundle a = analytic_gradient(d, rows, params, model, 0.8);
  CHECK(a.d_edge_logits.at(0, 3) == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(a.d_edge_logits.at(i, i) == 0.0);
}

TEST_CASE("reinforce mean tracks the enumeration gradient") {
  Rng rng(11);
  InterventionalDataset d = testutil::random_dataset(3, rng);
  BplParams params = testutil::random_params(3, rng);
  LinearGaussian model = random_linear(3, rng);
  std::vector<int> rows = testutil::all_rows(d);

  GradientBundle exact = exact_gradient(d, rows, params, model);

  const int steps = 20000;
  int dim = 3 + 9;
  std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
  Rng step_rng(99);
  for (int s = 0; s < steps; ++s) {
    Rng r = step_rng.derive(s);
    GradientBundle g = reinforce_step(d, rows, params, ConditionalModel(model), 8, 0.0, r);
    for (int c = 0; c < dim; ++c) {
      double v = c < 3 ? g.d_theta[c] : g.d_edge_logits.v[c - 3];
      double delta = v - mean[c];
      mean[c] += delta / (s + 1);
      m2[c] += delta * (v - mean[c]);
    }
  }
  for (int c = 0; c < dim; ++c) {
    double target = c < 3 ? exact.d_theta[c] : exact.d_edge_logits.v[c - 3];
    double se = std::sqrt(m2[c] / steps / (steps - 1.0));
    CHECK(std::abs(mean[c] - target) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("baseline preserves the estimator mean") {
  Rng rng(13);
  InterventionalDataset d = testutil::random_dataset(3, rng);
  BplParams params = testutil::random_params(3, rng);
  ConditionalModel model = random_linear(3, rng);
  std::vector<int> rows = testutil::all_rows(d);

  const int steps = 8000;
  std::vector<double> mean_with(3, 0.0), mean_without(3, 0.0), var_acc(3, 0.0);
  Rng step_rng(17);
  for (int s = 0; s < steps; ++s) {
    Rng r1 = step_rng.derive(s, 1);
    Rng r2 = step_rng.derive(s, 2);
    GradientBundle g1 = reinforce_step(d, rows, params, model, 8, 0.0, r1, true);
    GradientBundle g2 = reinforce_step(d, rows, params, model, 8, 0.0, r2, false);
    for (int c = 0; c < 3; ++c) {
      mean_with[c] += g1.d_theta[c] / steps;
      mean_without[c] += g2.d_theta[c] / steps;
      var_acc[c] += g2.d_theta[c] * g2.d_theta[c] / steps;
    }
  }
  for (int c = 0; c < 3; ++c) {
    double se = std::sqrt(var_acc[c] / steps) + 1e-9;
    CHECK(std::abs(mean_with[c] - mean_without[c]) <= 6.0 * se);
  }
}

TEST_CASE("analytic_score matches the all-roots closed form at p = 0") {
  Rng rng(19);
  InterventionalDataset d = testutil::random_dataset(4, rng);
  LinearGaussian model = random_linear(4, rng);
  BplParams params = BplParams::init(4);
  params.edge_logits.fill(-60.0);

  std::vector<int> rows = testutil::all_rows(d);
  std::vector<double> w = regime_weights(d);
  KahanSum expect;
  for (int r : rows) {
    auto excluded = d.excluded_mask(d.regime_of[r]);
    KahanSum row;
    for (int j = 0; j < 4; ++j) {
      if (excluded[j]) continue;
      double sigma2 = std::exp(2.0 * model.log_scale[j]);
      double resid = d.x.at(r, j) - model.bias[j];
      row.add(-0.5 * std::log(kTwoPi * sigma2) - 0.5 * resid * resid / sigma2);
    }
    expect.add(w[d.regime_of[r]] * row.value());
  }
  CHECK(analytic_score(d, rows, params, model) ==
        doctest::Approx(expect.value() / rows.size()).epsilon(1e-10));
}

TEST_CASE("analytic_score equals enumeration on small instances") {
  Rng rng(23);
  for (int trial = 0; trial < 4; ++trial) {
    InterventionalDataset d = testutil::random_dataset(4, rng);
    BplParams params = testutil::random_params(4, rng, trial == 2);
    LinearGaussian model = random_linear(4, rng);
    std::vector<int> rows = testutil::all_rows(d);
    double exact = exact_expected_score(d, rows, params, model);
    CHECK(analytic_score(d, rows, params, model) == doctest::Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("analytic_gradient matches finite differences") {
  Rng rng(29);
  InterventionalDataset d = testutil::random_dataset(4, rng);
  BplParams params = testutil::random_params(4, rng, true);
  LinearGaussian model = random_linear(4, rng);
  std::vector<int> rows = testutil::all_rows(d);
  const double lambda = 0.7;
  const double h = 1e-5;

  GradientBundle g = analytic_gradient(d, rows, params, model, lambda);

  for (int i = 0; i < 4; ++i) {
    BplParams up = params, dn = params;
    up.theta[i] += h;
    dn.theta[i] -= h;
    double fd = (penalized_score(d, rows, up, model, lambda) -
                 penalized_score(d, rows, dn, model, lambda)) /
                (2.0 * h);
    CHECK(g.d_theta[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (!params.free_entry(i, j)) continue;
      BplParams up = params, dn = params;
      up.edge_logits.at(i, j) += h;
      dn.edge_logits.at(i, j) -= h;
      double fd = (penalized_score(d, rows, up, model, lambda) -
                   penalized_score(d, rows, dn, model, lambda)) /
                  (2.0 * h);
      CHECK(g.d_edge_logits.at(i, j) == doctest::Approx(fd).epsilon(1e-5));
    }

  const auto& dm = std::get<LinearGaussian>(g.d_model);
  for (int j = 0; j < 4; ++j) {
    LinearGaussian up = model, dn = model;
    up.bias[j] += h;
    dn.bias[j] -= h;
    double fd = (analytic_score(d, rows, params, up) - analytic_score(d, rows, params, dn)) /
                (2.0 * h);
    CHECK(dm.bias[j] == doctest::Approx(fd).epsilon(1e-5));

    LinearGaussian us = model, ds = model;
    us.log_scale[j] += h;
    ds.log_scale[j] -= h;
    fd = (analytic_score(d, rows, params, us) - analytic_score(d, rows, params, ds)) /
         (2.0 * h);
    CHECK(dm.log_scale[j] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j) continue;
      LinearGaussian up = model, dn = model;
      up.weights.at(i, j) += h;
      dn.weights.at(i, j) -= h;
      double fd =
          (analytic_score(d, rows, params, up) - analytic_score(d, rows, params, dn)) /
          (2.0 * h);
      CHECK(dm.weights.at(i, j) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("cross-term subsampling is unbiased and seed-stable") {
  Rng rng(31);
  InterventionalDataset d = testutil::random_dataset(6, rng);
  BplParams params = testutil::random_params(6, rng);
  LinearGaussian model = random_linear(6, rng);
  std::vector<int> rows = testutil::all_rows(d);

  double full = analytic_score(d, rows, params, model);

  Rng sub_a(77), sub_b(77);
  double once = analytic_score(d, rows, params, model, 3, &sub_a);
  CHECK(analytic_score(d, rows, params, model, 3, &sub_b) == once);

  const int draws = 4000;
  double mean = 0.0, m2 = 0.0;
  Rng sub_rng(55);
  for (int k = 0; k < draws; ++k) {
    Rng r = sub_rng.derive(k);
    double v = analytic_score(d, rows, params, model, 3, &r);
    double delta = v - mean;
    mean += delta / (k + 1);
    m2 += delta * (v - mean);
  }
  double se = std::sqrt(m2 / draws / (draws - 1.0));
  CHECK(std::abs(mean - full) <= 4.0 * se + 1e-12);
}

TEST_CASE("subsample count follows the two-thirds power") {
  CHECK(cross_term_subsample_count(1) == 1);
  CHECK(cross_term_subsample_count(8) == 4);
  CHECK(cross_term_subsample_count(27) == 9);
  CHECK(cross_term_subsample_count(200) == 35);
  CHECK(cross_term_subsample_count(1000) == 100);
}

TEST_CASE("reinforce diagnostics respect the variance bound") {
  Rng rng(37);
  InterventionalDataset d = testutil::random_dataset(5, rng);
  BplParams params = testutil::random_params(5, rng);
  ConditionalModel model = random_linear(5, rng);
  std::vector<int> rows = testutil::all_rows(d);

  for (int s = 0; s < 50; ++s) {
    Rng r = rng.derive(s);
    GradientBundle g = reinforce_step(d, rows, params, model, 16, 0.3, r);
    CHECK(g.diagnostics.grad_trace_variance <= g.diagnostics.variance_bound + 1e-12);
  }
}

TEST_CASE("variance_report favors the baseline and honors both bounds") {
  Rng rng(41);
  InterventionalDataset d = testutil::random_dataset(6, rng);
  BplParams params = testutil::random_params(6, rng);
  LinearGaussian lg = random_linear(6, rng);
  // Nonzero weights so rewards actually vary across sampled DAGs.
  ConditionalModel model = lg;
  std::vector<int> rows = testutil::all_rows(d);

  Rng vr(43);
  VarianceReport rep = variance_report(d, rows, params, model, 16, 12, true, vr);
  CHECK(rep.trace_with > 0.0);
  CHECK(rep.trace_with < rep.trace_without);
  CHECK(rep.ratio_with_over_without < 1.0);
  CHECK(rep.trace_with <= rep.bound + 1e-12);
  CHECK(rep.trace_without <= rep.bound_without + 1e-12);
  CHECK(rep.trace_variance == rep.trace_with);
  CHECK(rep.K == 16);
  CHECK(rep.repeats == 12);
}

TEST_CASE("estimator results do not depend on the worker thread count") {
  Rng rng(47);
  InterventionalDataset d = testutil::random_dataset(5, rng);
  BplParams params = testutil::random_params(5, rng);
  LinearGaussian model = random_linear(5, rng);
  std::vector<int> rows = testutil::all_rows(d);

  int saved = worker_threads();
  set_worker_threads(1);
  Rng r1(7);
  GradientBundle a = reinforce_step(d, rows, params, ConditionalModel(model), 32, 0.5, r1);
  set_worker_threads(4);
  Rng r2(7);
  GradientBundle b = reinforce_step(d, rows, params, ConditionalModel(model), 32, 0.5, r2);
  set_worker_threads(saved);

  CHECK(a.d_theta == b.d_theta);
  CHECK(a.d_edge_logits == b.d_edge_logits);
  CHECK(std::get<LinearGaussian>(a.d_model).weights ==
        std::get<LinearGaussian>(b.d_model).weights);
  CHECK(a.diagnostics.objective_estimate == b.diagnostics.objective_estimate);
}
