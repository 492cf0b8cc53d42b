#include <benchmark/benchmark.h>

#include <random>

#include "treeproj/prune.hpp"
#include "treeproj/tree.hpp"

namespace {

using treeproj::FitTargets;
using treeproj::GrowConfig;

FitTargets make_targets(long n, long d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FitTargets t;
  t.points.resize(n, d);
  t.means.resize(n);
  t.variances = Eigen::VectorXd::Constant(n, 0.05);
  for (long i = 0; i < n; ++i) {
    for (long k = 0; k < d; ++k) t.points(i, k) = gauss(rng);
    t.means(i) = std::sin(2.0 * t.points(i, 0)) + 0.2 * gauss(rng);
  }
  return t;
}

void bm_grow(benchmark::State& state) {
  const auto t = make_targets(state.range(0), state.range(1), 42);
  const GrowConfig cfg{5, 0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(treeproj::grow(t, cfg));
  }
}

void bm_predict(benchmark::State& state) {
  const auto t = make_targets(state.range(0), state.range(1), 42);
  const auto tree = treeproj::grow(t, GrowConfig{5, 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.predict(t.points));
  }
}

void bm_prune_path(benchmark::State& state) {
  const auto t = make_targets(state.range(0), state.range(1), 42);
  const auto tree = treeproj::grow(t, GrowConfig{5, 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(treeproj::prune_path(tree, t));
  }
}

}  // namespace

BENCHMARK(bm_grow)->Args({200, 1})->Args({1000, 3})->Args({5000, 8});
BENCHMARK(bm_predict)->Args({200, 1})->Args({1000, 3})->Args({5000, 8});
BENCHMARK(bm_prune_path)->Args({200, 1})->Args({1000, 3})->Args({5000, 8});

BENCHMARK_MAIN();
