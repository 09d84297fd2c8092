#include "bcensus/similarity.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

#include "bcensus/errors.hpp"

namespace bcensus {

std::string_view to_string(VectorKind kind) noexcept {
  return kind == VectorKind::pixel ? "pixel" : "embedding";
}

VectorKind parse_vector_kind(std::string_view text) {
  if (text == "pixel") return VectorKind::pixel;
  if (text == "embedding") return VectorKind::embedding;
  throw InvalidArgument("unknown vector kind '" + std::string(text) + "' (expected pixel or embedding)");
}

double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
  const std::size_t n = a.size();
  double lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      lane[l] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    tail += d * d;
  }
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

double euclidean_distance(const ItemVector& a, const ItemVector& b) {
  if (a.values.size() != b.values.size()) {
    throw InvalidArgument("dimension mismatch: '" + a.id + "' has " + std::to_string(a.values.size()) +
                          " values, '" + b.id + "' has " + std::to_string(b.values.size()));
  }
  if (a.kind != b.kind) throw InvalidArgument("cannot compare a pixel vector with an embedding");
  return std::sqrt(squared_distance(a.values, b.values));
}

void validate_corpus(std::span<const ItemVector> items) {
  if (items.empty()) return;
  const auto& first = items.front();
  std::unordered_set<std::string_view> ids;
  ids.reserve(items.size());
  for (const auto& item : items) {
    if (item.id.empty()) throw InvalidArgument("item ids must be non-empty");
    if (!ids.insert(item.id).second) throw InvalidArgument("duplicate item id '" + item.id + "'");
    if (item.values.size() != first.values.size()) {
      throw InvalidArgument("item '" + item.id + "' has " + std::to_string(item.values.size()) +
                            " values, expected " + std::to_string(first.values.size()));
    }
    if (item.kind != first.kind) throw InvalidArgument("item '" + item.id + "' mixes vector kinds");
    if (item.kind == VectorKind::pixel) {
      for (const float v : item.values) {
        if (!(v >= 0.0f && v <= 1.0f)) {
          throw InvalidArgument("pixel item '" + item.id + "' has a value outside [0, 1]");
        }
      }
    }
  }
}

void subtract_mean(ItemVector& item) {
  if (item.values.empty()) return;
  const double mean = std::accumulate(item.values.begin(), item.values.end(), 0.0) /
                      static_cast<double>(item.values.size());
  for (float& v : item.values) v = static_cast<float>(static_cast<double>(v) - mean);
  item.kind = VectorKind::embedding;
}

std::vector<PairCandidate> top_k_pairs(std::span<const ItemVector> batch, std::size_t k, unsigned threads) {
  if (batch.size() < 2) throw InvalidArgument("top_k_pairs needs a batch of at least 2 items");
  if (k == 0) throw InvalidArgument("k must be >= 1");
  validate_corpus(batch);

  std::vector<std::string_view> ids;
  ids.reserve(batch.size());
  for (const auto& item : batch) ids.push_back(item.id);

  const auto pairs = select_closest_pairs(
      ids, k,
      [&](std::size_t i, std::size_t j) { return std::sqrt(squared_distance(batch[i].values, batch[j].values)); },
      threads);

  std::vector<PairCandidate> out;
  out.reserve(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    out.push_back({batch[pairs[r].a].id, batch[pairs[r].b].id, pairs[r].distance, r + 1});
  }
  return out;
}

Neighbor nearest_training_neighbor(const ItemVector& query, std::span<const ItemVector> corpus) {
  if (corpus.empty()) throw InvalidArgument("nearest neighbor search needs a non-empty corpus");
  const ItemVector* best = nullptr;
  double best_distance = 0.0;
  for (const auto& candidate : corpus) {
    const double d = euclidean_distance(query, candidate);
    if (best == nullptr || d < best_distance || (d == best_distance && candidate.id < best->id)) {
      best = &candidate;
      best_distance = d;
    }
  }
  return {best->id, best_distance};
}

}  // namespace bcensus
