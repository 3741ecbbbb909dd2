#include <benchmark/benchmark.h>

#include <vector>

#include "promptsense/random.hpp"
#include "promptsense/sampling.hpp"

using namespace promptsense;

namespace {

LogitVector make_logits(std::size_t n) {
  RandomStream rng(n);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() * 8 - 4;
  return LogitVector(v);
}

void BM_ShapeDistribution(benchmark::State& state) {
  const auto logits = make_logits(static_cast<std::size_t>(state.range(0)));
  const SamplingParams params{0.7, 0.9};
  for (auto _ : state) benchmark::DoNotOptimize(shape_distribution(logits, params));
}
BENCHMARK(BM_ShapeDistribution)->Arg(2)->Arg(16)->Arg(256)->Arg(4096);

void BM_SampleToken(benchmark::State& state) {
  const auto dist = shape_distribution(make_logits(static_cast<std::size_t>(state.range(0))), {1.0, 0.95});
  RandomStream rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_token(dist, rng));
}
BENCHMARK(BM_SampleToken)->Arg(2)->Arg(16)->Arg(256);

void BM_GenerateSequence(benchmark::State& state) {
  SimulatedModel model;
  model.vocab = {"<s>", "a", "b", "c", "d", "e", "f", "g"};
  model.max_len = 32;
  model.logit_fn = [](std::span<const TokenId> ctx) {
    std::vector<double> l(8, 0.0);
    l[0] = ctx.size() > 16 ? 2.0 : -2.0;
    l[1 + ctx.size() % 7] = 1.0;
    return LogitVector(l);
  };
  const std::vector<TokenId> prompt = {1, 2};
  RandomStream rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(generate_sequence(model, prompt, {0.8, 0.95}, rng));
}
BENCHMARK(BM_GenerateSequence);

}  // namespace
