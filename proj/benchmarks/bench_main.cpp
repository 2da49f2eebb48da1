// Microbenchmarks for the hot paths: gradient steps, DAG sampling, and the
// per-node likelihood kernels. Data setup happens outside the timed loops and
// is cached per problem size.

#include <benchmark/benchmark.h>

#include <map>
#include <vector>

#include "dagfit/bpl.hpp"
#include "dagfit/estimators.hpp"
#include "dagfit/rng.hpp"
#include "dagfit/synthbench.hpp"

using namespace dagfit;

namespace {

struct Problem {
  InterventionalDataset data;
  BplParams params;
  LinearGaussian model;
  std::vector<int> batch;
};

const Problem& problem_for(int n) {
  static std::map<int, Problem> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Problem p;
  Rng rng(1234 + n);
  GroundTruth truth = make_linear_truth(n, edge_prob_for_degree(n, 1.0), rng);
  p.data = gen_linear_dataset(truth, 1000, 0, rng);
  p.params = BplParams::init(n);
  for (int i = 0; i < n; ++i) p.params.theta[i] = 0.1 * rng.normal();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) p.params.edge_logits.at(i, j) = 0.5 * rng.normal();
  p.model = LinearGaussian::init(n);
  p.batch.resize(64);
  for (int& r : p.batch) r = rng.uniform_int(p.data.n_rows());
  return cache.emplace(n, std::move(p)).first->second;
}

void bm_sample_dag(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Problem& p = problem_for(n);
  Rng rng(7);
  for (auto _ : state) {
    DagSample s = sample_dag(p.params, rng);
    benchmark::DoNotOptimize(s.adjacency.a.data());
  }
  state.SetItemsProcessed(state.iterations());
}

void bm_analytic_gradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const bool subsample = state.range(1) != 0;
  const Problem& p = problem_for(n);
  Rng rng(7);
  const int sub = subsample ? cross_term_subsample_count(n) : 0;
  for (auto _ : state) {
    GradientBundle g =
        analytic_gradient(p.data, p.batch, p.params, p.model, 1.0, sub, &rng);
    benchmark::DoNotOptimize(g.d_theta.data());
  }
}

void bm_reinforce_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int K = static_cast<int>(state.range(1));
  const Problem& p = problem_for(n);
  Rng rng(7);
  ConditionalModel model(p.model);
  for (auto _ : state) {
    GradientBundle g = reinforce_step(p.data, p.batch, p.params, model, K, 1.0, rng);
    benchmark::DoNotOptimize(g.d_theta.data());
  }
}

void bm_loglik_batch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Problem& p = problem_for(n);
  ConditionalModel model(p.model);
  std::vector<std::uint8_t> mask(n, 1);
  mask[0] = 0;
  for (auto _ : state) {
    double acc = 0.0;
    for (int r : p.batch)
      acc += loglik_node(model, p.data.x.row(r), n, mask.data(), 0);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * p.batch.size());
}

void bm_expected_edges(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Problem& p = problem_for(n);
  for (auto _ : state) {
    Mat e = expected_edge_matrix(p.params);
    benchmark::DoNotOptimize(e.v.data());
  }
}

}  // namespace

BENCHMARK(bm_sample_dag)->Arg(10)->Arg(50)->Arg(200);
BENCHMARK(bm_expected_edges)->Arg(10)->Arg(50)->Arg(200);
BENCHMARK(bm_loglik_batch)->Arg(10)->Arg(100);
BENCHMARK(bm_analytic_gradient)
    ->Args({50, 0})
    ->Args({50, 1})
    ->Args({200, 0})
    ->Args({200, 1})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_reinforce_step)
    ->Args({20, 50})
    ->Args({20, 200})
    ->Args({50, 50})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
