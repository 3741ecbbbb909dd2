#include <benchmark/benchmark.h>

#include "promptsense/random.hpp"
#include "promptsense/stats.hpp"

using namespace promptsense;

namespace {

CodedPool make_pool(std::size_t n, std::size_t r) {
  RandomStream rng(n * 31 + r);
  CodedPool pool;
  pool.examples = n;
  pool.repeats = r;
  for (std::size_t i = 0; i < n; ++i) {
    pool.golds.push_back(static_cast<LabelCode>(i % 2));
    for (std::size_t k = 0; k < r; ++k) {
      const double u = rng.uniform();
      pool.codes.push_back(u < 0.75 ? pool.golds.back() : u < 0.95 ? static_cast<LabelCode>(1 - i % 2) : kUnparsed);
    }
  }
  return pool;
}

void BM_McDistribution(benchmark::State& state) {
  const auto pool = make_pool(static_cast<std::size_t>(state.range(0)), 9);
  MonteCarloConfig config;
  config.n_samples = 16384;
  config.threads = static_cast<unsigned>(state.range(1));
  const MetricKind kind{Metric::uar, UnparsedPolicy::count_as_incorrect};
  for (auto _ : state) benchmark::DoNotOptimize(mc_distribution(pool, kind, config));
}
BENCHMARK(BM_McDistribution)->Args({200, 1})->Args({200, 4})->Args({1000, 4})->Unit(benchmark::kMillisecond);

void BM_PermutationTest(benchmark::State& state) {
  const auto a = make_pool(static_cast<std::size_t>(state.range(0)), 2);
  const auto col_a = a.repeat_column(0), col_b = a.repeat_column(1);
  const MetricKind kind{Metric::accuracy, UnparsedPolicy::count_as_incorrect};
  for (auto _ : state) benchmark::DoNotOptimize(permutation_test(col_a, col_b, a.golds, kind, 10000, 7));
}
BENCHMARK(BM_PermutationTest)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
