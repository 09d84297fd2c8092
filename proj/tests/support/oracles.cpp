#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace bcensus::testing {

namespace {

void enumerate(std::span<const double> probs, std::size_t depth, std::size_t m, long double mass,
               std::vector<std::size_t>& seen, bool repeated, long double& total) {
  if (depth == m) {
    if (repeated) total += mass;
    return;
  }
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const bool again = std::find(seen.begin(), seen.end(), a) != seen.end();
    seen.push_back(a);
    enumerate(probs, depth + 1, m, mass * probs[a], seen, repeated || again, total);
    seen.pop_back();
  }
}

}  // namespace

long double enumerate_collision_probability(std::span<const double> probs, std::size_t m) {
  long double total = 0.0L;
  std::vector<std::size_t> seen;
  enumerate(probs, 0, m, 1.0L, seen, false, total);
  return total;
}

long double product_collision_probability(std::size_t n, std::size_t m) {
  long double none = 1.0L;
  for (std::size_t i = 1; i < m; ++i) none *= 1.0L - static_cast<long double>(i) / static_cast<long double>(n);
  return 1.0L - std::max(none, 0.0L);
}

long double naive_distance(const ItemVector& a, const ItemVector& b) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const long double d = static_cast<long double>(a.values[i]) - static_cast<long double>(b.values[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::vector<NaivePair> naive_top_k(std::span<const ItemVector> items, std::size_t k) {
  std::vector<NaivePair> all;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      NaivePair p{items[i].id, items[j].id, static_cast<double>(naive_distance(items[i], items[j]))};
      if (p.id_b < p.id_a) std::swap(p.id_a, p.id_b);
      all.push_back(std::move(p));
    }
  }
  std::sort(all.begin(), all.end(), [](const NaivePair& x, const NaivePair& y) {
    return std::tie(x.distance, x.id_a, x.id_b) < std::tie(y.distance, y.id_a, y.id_b);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::pair<std::string, double> naive_nearest(const ItemVector& query, std::span<const ItemVector> corpus) {
  std::pair<std::string, double> best{"", INFINITY};
  for (const auto& c : corpus) {
    const double d = static_cast<double>(naive_distance(query, c));
    if (d < best.second || (d == best.second && c.id < best.first)) best = {c.id, d};
  }
  return best;
}

Clustering cluster_by_threshold(std::span<const ItemVector> items, double threshold) {
  std::vector<std::size_t> parent(items.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // Same sum as naive_distance, abandoned once it passes threshold^2.
  const long double limit = static_cast<long double>(threshold) * threshold;
  auto within = [&](const ItemVector& a, const ItemVector& b) {
    long double sum = 0.0L;
    for (std::size_t d = 0; d < a.values.size(); ++d) {
      const long double x = static_cast<long double>(a.values[d]) - static_cast<long double>(b.values[d]);
      sum += x * x;
      if (sum > limit) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (within(items[i], items[j])) parent[find(i)] = find(j);
    }
  }
  std::vector<std::size_t> size(items.size(), 0);
  for (std::size_t i = 0; i < items.size(); ++i) ++size[find(i)];
  Clustering out;
  for (const auto s : size) {
    if (s < 2) continue;
    out.cluster_sizes.push_back(s);
    out.duplicate_pairs += static_cast<std::uint64_t>(s) * (s - 1) / 2;
  }
  return out;
}

double effective_support(std::size_t pool_size, std::uint64_t duplicate_pairs) {
  const double p = static_cast<double>(pool_size);
  return p * (p - 1.0) / 2.0 / static_cast<double>(duplicate_pairs);
}

}  // namespace bcensus::testing
