#include <cstdio>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "bcensus/similarity.hpp"

namespace {

using namespace bcensus;

std::vector<ItemVector> batch(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(n * 31 + dim);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<ItemVector> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "i%05zu", i);
    out[i].id = id;
    out[i].values.resize(dim);
    for (auto& v : out[i].values) v = u(rng);
  }
  return out;
}

// range(0) = batch size, range(1) = dimension (64×64 grayscale = 4096).
void BM_TopK(benchmark::State& state) {
  const auto items = batch(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(top_k_pairs(items, 20, 1));
  const auto n = state.range(0);
  state.SetItemsProcessed(state.iterations() * n * (n - 1) / 2);
}
BENCHMARK(BM_TopK)->Args({100, 64})->Args({500, 64})->Args({400, 4096})->Unit(benchmark::kMillisecond);

void BM_NearestNeighbor(benchmark::State& state) {
  const auto corpus = batch(static_cast<std::size_t>(state.range(0)), 4096);
  const auto query = batch(1, 4096).front();
  for (auto _ : state) benchmark::DoNotOptimize(nearest_training_neighbor(query, corpus));
}
BENCHMARK(BM_NearestNeighbor)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
