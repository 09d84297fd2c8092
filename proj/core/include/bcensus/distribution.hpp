#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "bcensus/rng.hpp"

namespace bcensus {

// Finite probability vector over atoms 0..N-1. Immutable once built.
class DiscreteDistribution {
 public:
  // Accepts entries that are finite and non-negative and whose sum is within
  // kSumTolerance of 1; the vector is renormalized. Anything else throws
  // InvalidArgument.
  static DiscreteDistribution from_probabilities(std::vector<double> probs);

  static constexpr double kSumTolerance = 1e-9;

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t atom) const { return probs_[atom]; }
  std::span<const double> probs() const noexcept { return probs_; }

  // True when every entry is bitwise identical.
  bool is_uniform() const noexcept { return uniform_; }
  // Number of atoms carrying positive mass.
  std::size_t support_size() const noexcept { return support_; }

 private:
  DiscreteDistribution() = default;

  std::vector<double> probs_;
  bool uniform_ = false;
  std::size_t support_ = 0;
};

DiscreteDistribution make_uniform(std::size_t n);

// Mass rho spread uniformly over the first n_head atoms and 1 - rho spread
// uniformly over the next n_tail atoms. n_tail may be 0 only when rho == 1.
DiscreteDistribution make_mass_plus_uniform(double rho, std::size_t n_head, std::size_t n_tail);

// Text format: one probability per line; blank lines and lines whose first
// non-blank character is '#' are ignored.
DiscreteDistribution parse_distribution_text(std::istream& in);

// Walker alias table; one uniform index and one uniform double per draw.
class AliasSampler {
 public:
  explicit AliasSampler(const DiscreteDistribution& dist);

  std::uint32_t draw(CounterRng& rng) const noexcept {
    const auto column = static_cast<std::uint32_t>(rng.below(prob_.size()));
    return rng.uniform01() < prob_[column] ? column : alias_[column];
  }

  std::size_t size() const noexcept { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

using SampleBatch = std::vector<std::uint32_t>;

// m i.i.d. atom ids; a pure function of (dist, m, seed).
SampleBatch sample_batch(const DiscreteDistribution& dist, std::size_t m, std::uint64_t seed);
SampleBatch sample_batch(const AliasSampler& sampler, std::size_t m, std::uint64_t seed);

bool has_repeat(std::span<const std::uint32_t> atoms);

// Exact probability that m i.i.d. draws contain at least one repeated atom.
// Uniform distributions use the closed-form product; everything else goes
// through the elementary-symmetric dynamic program, which is refused with
// ResourceLimit when size() * m exceeds kExactCostLimit.
double exact_collision_probability(const DiscreteDistribution& dist, std::size_t m);

inline constexpr double kExactCostLimit = 1e9;

// The two independent routes behind exact_collision_probability, exposed so
// they can be cross-checked. Neither applies the cost guard.
//
// 1 - prod_{i<m} (1 - i/n), accumulated in log space.
double uniform_collision_probability(std::size_t n, std::size_t m);
// 1 - m! e_m(p), where the DP tracks k! e_k(p_1..p_i) / (p_1 + ... + p_i)^k.
// That ratio is the probability that k draws from the renormalized prefix are
// all distinct, so every state stays in [0, 1] and a state small enough to
// underflow contributes less than its own magnitude to the final answer.
double dp_collision_probability(std::span<const double> probs, std::size_t m);

// 95% Wilson score interval for collided / trials.
struct CollisionEstimate {
  std::uint64_t trials = 0;
  std::uint64_t collided = 0;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  double midpoint() const noexcept { return 0.5 * (ci_low + ci_high); }
};

CollisionEstimate wilson_estimate(std::uint64_t collided, std::uint64_t trials);

// Runs `trials` batches of size m. Trial t draws from CounterRng(trial_seed(seed, t)),
// so the estimate does not depend on `threads` (0 = hardware concurrency).
CollisionEstimate monte_carlo_collision(const DiscreteDistribution& dist, std::size_t m,
                                        std::uint64_t trials, std::uint64_t seed,
                                        unsigned threads = 0);

// Number of batches among [first, first + count) that collide; shared by the
// Monte Carlo estimator and the census engine so both see identical draws.
std::uint64_t count_colliding_trials(const AliasSampler& sampler, std::size_t m,
                                     std::uint64_t first, std::uint64_t count,
                                     std::uint64_t seed, unsigned threads);

// Uniformity surrogate 1 / sum p^2; N for uniform on N atoms, 1 for a point mass.
double beta(const DiscreteDistribution& dist);

}  // namespace bcensus
