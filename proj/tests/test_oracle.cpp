#include <cmath>
#include <vector>

#include "dagfit/numeric.hpp"
#include "dagfit/objective.hpp"
#include "dagfit/oracle.hpp"
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
    m.bias[j] = 0.3 * rng.normal();
    m.log_scale[j] = 0.2 * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("pair stats at equal logits") {
  PairStats st = exact_pair_stats({0.4, 0.4, 0.4});
  CHECK(st.total_prob == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      CHECK(st.precedes.at(i, j) == doctest::Approx(0.5).epsilon(1e-12));
      for (int k = 0; k < 3; ++k) {
        if (k == i || k == j) continue;
        CHECK(st.joint_at(i, k, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
      }
    }
}

TEST_CASE("pair stats normalize for random logits") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> theta = testutil::random_theta(5, rng);
    PairStats st = exact_pair_stats(theta);
    CHECK(std::abs(st.total_prob - 1.0) <= 1e-12);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (i != j)
          CHECK(std::abs(st.precedes.at(i, j) + st.precedes.at(j, i) - 1.0) <= 1e-12);
  }
}

TEST_CASE("closed forms agree with enumeration") {
  Rng rng(7);
  for (int n : {3, 4}) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> theta = testutil::random_theta(n, rng);
      PairStats st = exact_pair_stats(theta);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          CHECK(std::abs(prob_precedes(theta, i, j) - st.precedes.at(i, j)) <= 1e-12);
          for (int k = 0; k < n; ++k) {
            if (k == i || k == j) continue;
            CHECK(std::abs(prob_joint_precedes(theta, i, j, k) - st.joint_at(i, k, j)) <=
                  1e-12);
          }
        }
    }
  }
}

TEST_CASE("expected adjacency agrees with enumeration") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    BplParams params = testutil::random_params(4, rng, trial % 2 == 1);
    Mat exact = exact_expected_adjacency(params);
    Mat closed = expected_edge_matrix(params);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(std::abs(exact.at(i, j) - closed.at(i, j)) <= 1e-12);
  }
}

TEST_CASE("enumeration respects its node budget") {
  std::vector<double> theta(7, 0.0);
  CHECK_THROWS_AS(exact_pair_stats(theta), std::invalid_argument);

  EnumerationBudget wide{.max_nodes = 7};
  CHECK(exact_pair_stats(theta, wide).total_prob == doctest::Approx(1.0));
}

TEST_CASE("exact expected score at p = 0 is the no-parent likelihood") {
  Rng rng(13);
  InterventionalDataset d = testutil::random_dataset(3, rng);
  LinearGaussian model = random_linear(3, rng);
  BplParams params = BplParams::init(3);
  params.edge_logits.fill(-60.0);
  std::vector<int> rows = testutil::all_rows(d);

  std::vector<double> w = regime_weights(d);
  KahanSum expect;
  for (int r : rows) {
    auto excluded = d.excluded_mask(d.regime_of[r]);
    KahanSum row;
    for (int j = 0; j < 3; ++j) {
      if (excluded[j]) continue;
      double sigma2 = std::exp(2.0 * model.log_scale[j]);
      double resid = d.x.at(r, j) - model.bias[j];
      row.add(-0.5 * std::log(kTwoPi * sigma2) - 0.5 * resid * resid / sigma2);
    }
    expect.add(w[d.regime_of[r]] * row.value());
  }
  CHECK(exact_expected_score(d, rows, params, model) ==
        doctest::Approx(expect.value() / rows.size()).epsilon(1e-10));
}

TEST_CASE("exact gradient vanishes for always-excluded nodes") {
  Rng rng(17);
  InterventionalDataset d = testutil::random_dataset(3, rng);
  d.intervened = {{2}, {0, 2}, {1, 2}};  // node 2 excluded in every regime
  BplParams params = testutil::random_params(3, rng);
  LinearGaussian model = random_linear(3, rng);
  std::vector<int> rows = testutil::all_rows(d);

  GradientBundle g = exact_gradient(d, rows, params, model);
  const auto& dm = std::get<LinearGaussian>(g.d_model);
  CHECK(dm.bias[2] == 0.0);
  CHECK(dm.log_scale[2] == 0.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(dm.weights.at(i, 2) == 0.0);
    CHECK(g.d_edge_logits.at(i, 2) == 0.0);
  }
}

TEST_CASE("exact and analytic gradients are mutually consistent") {
  Rng rng(19);
  InterventionalDataset d = testutil::random_dataset(4, rng);
  BplParams params = testutil::random_params(4, rng);
  LinearGaussian model = random_linear(4, rng);
  std::vector<int> rows = testutil::all_rows(d);

  GradientBundle exact = exact_gradient(d, rows, params, model);
  GradientBundle analytic = analytic_gradient(d, rows, params, model, 0.0);
  for (int i = 0; i < 4; ++i) {
    double denom = std::max({std::abs(exact.d_theta[i]), std::abs(analytic.d_theta[i]), 1e-8});
    CHECK(std::abs(exact.d_theta[i] - analytic.d_theta[i]) / denom <= 1e-4);
  }
  for (std::size_t c = 0; c < exact.d_edge_logits.v.size(); ++c) {
    double denom = std::max(
        {std::abs(exact.d_edge_logits.v[c]), std::abs(analytic.d_edge_logits.v[c]), 1e-8});
    CHECK(std::abs(exact.d_edge_logits.v[c] - analytic.d_edge_logits.v[c]) / denom <= 1e-4);
  }
}
