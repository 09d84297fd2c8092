#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcensus/parallel.hpp"

namespace bcensus {

enum class VectorKind { pixel, embedding };

std::string_view to_string(VectorKind kind) noexcept;
// Throws InvalidArgument on anything other than "pixel" / "embedding".
VectorKind parse_vector_kind(std::string_view text);

// One sample: raw pixel intensities in [0, 1] or an embedding.
struct ItemVector {
  std::string id;
  std::vector<float> values;
  VectorKind kind = VectorKind::pixel;
};

// A flagged pair, canonicalized so that id_a < id_b.
struct PairCandidate {
  std::string id_a;
  std::string id_b;
  double distance = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const PairCandidate&, const PairCandidate&) = default;
};

// Caller guarantees equal lengths. The sum runs over eight fixed lanes, so a
// given pair always yields the same bits whatever thread computes it.
double squared_distance(std::span<const float> a, std::span<const float> b) noexcept;

// Throws InvalidArgument on length or kind mismatch.
double euclidean_distance(const ItemVector& a, const ItemVector& b);

// Checks one corpus: non-empty ids, unique ids, shared length and kind,
// pixel values inside [0, 1]. Throws InvalidArgument.
void validate_corpus(std::span<const ItemVector> items);

// Shifts the vector to zero mean (optional pixel normalization for
// unaligned data). The result is no longer an intensity vector, so the kind
// becomes embedding.
void subtract_mean(ItemVector& item);

// The k closest pairs of the batch in (distance, id_a, id_b) order. Exact.
// Output does not depend on `threads` (0 = hardware concurrency).
std::vector<PairCandidate> top_k_pairs(std::span<const ItemVector> batch, std::size_t k,
                                       unsigned threads = 0);

struct Neighbor {
  std::string id;
  double distance = 0.0;
};

// Exact linear scan; ties go to the smaller id.
Neighbor nearest_training_neighbor(const ItemVector& query, std::span<const ItemVector> corpus);

// Position-based pair used by the selection kernel; `a` and `b` index into
// the caller's id list with ids[a] < ids[b].
struct IndexedPair {
  double distance = 0.0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
};

namespace detail {

inline constexpr std::size_t kPairBlock = 32;

struct PairOrder {
  std::span<const std::string_view> ids;

  bool operator()(const IndexedPair& x, const IndexedPair& y) const noexcept {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (ids[x.a] != ids[y.a]) return ids[x.a] < ids[y.a];
    return ids[x.b] < ids[y.b];
  }
};

}  // namespace detail

// Exact top-k over all pairs of `ids.size()` items. `distance(i, j)` returns
// the reported L2 distance for positions i < j. Rows are processed in tiles;
// each worker keeps a bounded heap and the heaps are merged under the same
// total order, so the result is independent of the worker count.
template <typename DistanceFn>
std::vector<IndexedPair> select_closest_pairs(std::span<const std::string_view> ids, std::size_t k,
                                              DistanceFn&& distance, unsigned threads) {
  const std::size_t n = ids.size();
  const std::size_t total = n < 2 ? 0 : n * (n - 1) / 2;
  k = std::min(k, total);
  if (k == 0) return {};

  const detail::PairOrder order{ids};
  const std::size_t blocks = (n + detail::kPairBlock - 1) / detail::kPairBlock;
  // Tile (bi, bj) with bj >= bi; tiles are dealt round-robin to workers.
  const std::size_t tiles = blocks * (blocks + 1) / 2;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), tiles));
  std::vector<std::vector<IndexedPair>> partial(workers);

  parallel_slices(workers, workers, [&](unsigned, std::size_t w_begin, std::size_t w_end) {
    for (std::size_t w = w_begin; w < w_end; ++w) {
      std::priority_queue<IndexedPair, std::vector<IndexedPair>, detail::PairOrder> heap(order);
      std::size_t tile = 0;
      for (std::size_t bi = 0; bi < blocks; ++bi) {
        for (std::size_t bj = bi; bj < blocks; ++bj, ++tile) {
          if (tile % workers != w) continue;
          const std::size_t i_end = std::min(n, (bi + 1) * detail::kPairBlock);
          const std::size_t j_end = std::min(n, (bj + 1) * detail::kPairBlock);
          for (std::size_t i = bi * detail::kPairBlock; i < i_end; ++i) {
            for (std::size_t j = std::max(i + 1, bj * detail::kPairBlock); j < j_end; ++j) {
              IndexedPair cand{distance(i, j), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
              if (ids[cand.b] < ids[cand.a]) std::swap(cand.a, cand.b);
              if (heap.size() < k) {
                heap.push(cand);
              } else if (order(cand, heap.top())) {
                heap.pop();
                heap.push(cand);
              }
            }
          }
        }
      }
      auto& out = partial[w];
      out.reserve(heap.size());
      while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
      }
    }
  });

  std::vector<IndexedPair> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  std::sort(merged.begin(), merged.end(), order);
  merged.resize(k);
  return merged;
}

}  // namespace bcensus
