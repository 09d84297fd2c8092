#pragma once

#include <cstdint>

namespace bcensus {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Per-trial seed derivation. Applied before any parallel dispatch so results
// do not depend on how trials are scheduled.
constexpr std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial_index) noexcept {
  return seed ^ trial_index;
}

// Counter-based generator: the i-th output is mix64(key + i * gamma), so any
// position of the stream is addressable and streams are cheap to split.
// Satisfies std::uniform_random_bit_generator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t seed) noexcept : key_(mix64(seed + kGoldenGamma)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  // Independent child stream; does not advance this generator.
  constexpr CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(key_ ^ mix64(index ^ 0x5851F42D4C957F2DULL));
  }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

  // Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 product = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bcensus
