#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "bcensus/distribution.hpp"

namespace {

using namespace bcensus;

DiscreteDistribution skewed(std::size_t n) {
  std::mt19937_64 rng(n);
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& x : p) sum += x = g(rng);
  for (auto& x : p) x /= sum;
  return DiscreteDistribution::from_probabilities(p);
}

void BM_DpCollision(benchmark::State& state) {
  const auto dist = skewed(static_cast<std::size_t>(state.range(0)));
  const auto m = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(dp_collision_probability(dist.probs(), m));
  state.SetComplexityN(state.range(0) * state.range(1));
}
BENCHMARK(BM_DpCollision)->Args({1000, 50})->Args({10000, 200})->Args({100000, 500});

void BM_UniformExact(benchmark::State& state) {
  const auto dist = make_uniform(static_cast<std::size_t>(state.range(0)));
  const auto m = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(exact_collision_probability(dist, m));
}
BENCHMARK(BM_UniformExact)->Args({160000, 471})->Args({1000000, 1200});

// Trials per second of the Monte Carlo estimator, single thread.
void BM_MonteCarlo(benchmark::State& state) {
  const auto dist = make_uniform(160000);
  const auto m = static_cast<std::size_t>(state.range(0));
  constexpr std::uint64_t kTrials = 1000;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_collision(dist, m, kTrials, ++seed, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kTrials));
}
BENCHMARK(BM_MonteCarlo)->Arg(64)->Arg(471)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace
