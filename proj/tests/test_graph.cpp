#include <algorithm>
#include <cmath>
#include <vector>

#include "dagfit/graph.hpp"
#include "dagfit/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dagfit;

namespace {

Adjacency graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  Adjacency a(n);
  for (auto [i, j] : edges) a.set(i, j, 1);
  return a;
}

Adjacency random_dag(int n, double p, Rng& rng) {
  Permutation perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  Adjacency mask(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && rng.bernoulli(p)) mask.set(i, j, 1);
  return adjacency_from_sample(perm, mask);
}

}  // namespace

TEST_CASE("perm_inverse basics") {
  CHECK(perm_inverse({0, 1, 2}) == Permutation{0, 1, 2});
  CHECK(perm_inverse({2, 0, 1}) == Permutation{1, 2, 0});
}

TEST_CASE("perm_inverse is an involution") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Permutation p(8);
    for (int i = 0; i < 8; ++i) p[i] = i;
    for (int i = 7; i > 0; --i) std::swap(p[i], p[rng.uniform_int(i + 1)]);
    CHECK(perm_inverse(perm_inverse(p)) == p);
    Permutation inv = perm_inverse(p);
    for (int k = 0; k < 8; ++k) CHECK(inv[p[k]] == k);
  }
}

TEST_CASE("adjacency_from_sample with identity order keeps upper triangle") {
  Adjacency ones(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) ones.set(i, j, 1);
  Adjacency a = adjacency_from_sample({0, 1, 2}, ones);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(a.at(i, j) == (i < j ? 1 : 0));
  CHECK(a.edge_count() == 3);
}

TEST_CASE("adjacency_from_sample of an empty mask is empty") {
  Adjacency zeros(4);
  Adjacency a = adjacency_from_sample({3, 1, 0, 2}, zeros);
  CHECK(a.edge_count() == 0);
}

TEST_CASE("adjacency_from_sample output is always acyclic") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    Adjacency a = random_dag(6, 0.5, rng);
    CHECK(is_dag(a));
  }
}

TEST_CASE("is_dag basics") {
  CHECK(is_dag(Adjacency(3)));
  Adjacency two(2);
  two.set(0, 1, 1);
  two.set(1, 0, 1);
  CHECK(!is_dag(two));
  Adjacency self(2);
  self.set(0, 0, 1);
  CHECK(!is_dag(self));
}

TEST_CASE("shd basics") {
  Adjacency t = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK(shd(t, t) == 0);

  Adjacency rev = graph_from_edges(4, {{1, 0}, {1, 2}, {2, 3}});
  CHECK(shd(rev, t) == 1);

  CHECK(shd(Adjacency(4), t) == 3);
}

TEST_CASE("shd is symmetric and satisfies the triangle inequality") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Adjacency a = random_dag(6, 0.4, rng);
    Adjacency b = random_dag(6, 0.4, rng);
    Adjacency c = random_dag(6, 0.4, rng);
    CHECK(shd(a, b) == shd(b, a));
    CHECK(shd(a, c) <= shd(a, b) + shd(b, c));
  }
}

TEST_CASE("confusion_metrics on exact recovery") {
  Adjacency t = graph_from_edges(3, {{0, 1}, {1, 2}});
  MetricReport m = confusion_metrics(t, t);
  CHECK(m.fdr == 0.0);
  CHECK(m.tpr == 1.0);
  CHECK(m.f1 == 1.0);
}

TEST_CASE("confusion_metrics on disjoint estimate") {
  Adjacency t = graph_from_edges(3, {{0, 1}});
  Adjacency e = graph_from_edges(3, {{1, 2}});
  MetricReport m = confusion_metrics(e, t);
  CHECK(m.tpr == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("confusion_metrics on half recall") {
  Adjacency t = graph_from_edges(4, {{0, 1}, {2, 3}});
  Adjacency e = graph_from_edges(4, {{0, 1}});
  MetricReport m = confusion_metrics(e, t);
  CHECK(m.precision == doctest::Approx(1.0));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("confusion_metrics conventions on empty graphs") {
  MetricReport m = confusion_metrics(Adjacency(3), Adjacency(3));
  CHECK(m.tpr == 1.0);
  CHECK(m.fdr == 0.0);
}

TEST_CASE("confusion_metrics stays in range") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    MetricReport m = confusion_metrics(random_dag(5, 0.5, rng), random_dag(5, 0.5, rng));
    for (double v : {m.fdr, m.tpr, m.precision, m.recall, m.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("kendall_tau_partial on a chain") {
  Adjacency chain = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK(kendall_tau_partial({4, 3, 2, 1}, chain) == doctest::Approx(1.0));
  CHECK(kendall_tau_partial({-4, -3, -2, -1}, chain) == doctest::Approx(-1.0));
  // 6 comparable pairs; the (1,2) score tie counts neither way.
  CHECK(kendall_tau_partial({3, 2, 2, 0}, chain) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("kendall_tau_partial uses only path-comparable pairs") {
  // Two disconnected edges: (0,1) and (2,3) are the only comparable pairs.
  Adjacency g = graph_from_edges(4, {{0, 1}, {2, 3}});
  CHECK(kendall_tau_partial({1, 0, 0, 1}, g) == doctest::Approx(0.0));
  CHECK(kendall_tau_partial({0, 0, 0, 0}, Adjacency(4)) == doctest::Approx(1.0));
}

TEST_CASE("kendall_tau_partial is invariant under monotone transforms") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Adjacency g = random_dag(6, 0.4, rng);
    std::vector<double> s = testutil::random_theta(6, rng);
    double base = kendall_tau_partial(s, g);
    std::vector<double> t1 = s, t2 = s;
    for (double& v : t1) v = 2.0 * v + 1.0;
    for (double& v : t2) v = v * v * v;
    CHECK(kendall_tau_partial(t1, g) == doctest::Approx(base));
    CHECK(kendall_tau_partial(t2, g) == doctest::Approx(base));
  }
}

TEST_CASE("transitive_closure finds multi-hop paths") {
  Adjacency g = graph_from_edges(4, {{0, 1}, {1, 2}});
  Adjacency r = transitive_closure(g);
  CHECK(r.at(0, 2) == 1);
  CHECK(r.at(0, 3) == 0);
  CHECK(r.at(2, 0) == 0);
}
