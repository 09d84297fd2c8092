#include "bcensus/distribution.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <string>
#include <unordered_set>

#include "bcensus/errors.hpp"
#include "bcensus/parallel.hpp"

namespace bcensus {

namespace {

constexpr double kWilsonZ = 1.959963984540054;  // two-sided 95%

// Batches over supports up to this size are checked with a stamp array.
constexpr std::size_t kStampLimit = std::size_t{1} << 22;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

DiscreteDistribution DiscreteDistribution::from_probabilities(std::vector<double> probs) {
  if (probs.empty()) throw InvalidArgument("distribution must have at least one atom");
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!std::isfinite(p) || p < 0.0) {
      throw InvalidArgument("probability at atom " + std::to_string(i) + " is negative or not finite");
    }
    const double y = p - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidArgument("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  if (sum != 1.0) {
    for (double& p : probs) p /= sum;
  }

  DiscreteDistribution dist;
  dist.probs_ = std::move(probs);
  const double first = dist.probs_.front();
  dist.uniform_ = std::all_of(dist.probs_.begin(), dist.probs_.end(), [first](double p) { return p == first; });
  dist.support_ = static_cast<std::size_t>(
      std::count_if(dist.probs_.begin(), dist.probs_.end(), [](double p) { return p > 0.0; }));
  return dist;
}

DiscreteDistribution make_uniform(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform distribution needs n >= 1");
  return DiscreteDistribution::from_probabilities(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DiscreteDistribution make_mass_plus_uniform(double rho, std::size_t n_head, std::size_t n_tail) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("rho must lie in (0, 1]");
  if (n_head == 0) throw InvalidArgument("n_head must be >= 1");
  if (rho < 1.0 && n_tail == 0) throw InvalidArgument("n_tail must be >= 1 when rho < 1");
  if (rho == 1.0 && n_tail != 0) {
    // Zero-mass tail atoms are still part of the atom set.
    std::vector<double> probs(n_head + n_tail, 0.0);
    std::fill_n(probs.begin(), n_head, 1.0 / static_cast<double>(n_head));
    return DiscreteDistribution::from_probabilities(std::move(probs));
  }
  std::vector<double> probs;
  probs.reserve(n_head + n_tail);
  probs.insert(probs.end(), n_head, rho / static_cast<double>(n_head));
  if (n_tail > 0) probs.insert(probs.end(), n_tail, (1.0 - rho) / static_cast<double>(n_tail));
  return DiscreteDistribution::from_probabilities(std::move(probs));
}

DiscreteDistribution parse_distribution_text(std::istream& in) {
  std::vector<double> probs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw InvalidInput("line " + std::to_string(line_no) + ": not a decimal probability: '" +
                         std::string(text) + "'");
    }
    probs.push_back(value);
  }
  try {
    return DiscreteDistribution::from_probabilities(std::move(probs));
  } catch (const InvalidArgument& e) {
    throw InvalidInput(e.what());
  }
}

AliasSampler::AliasSampler(const DiscreteDistribution& dist)
    : prob_(dist.size(), 0.0), alias_(dist.size(), 0) {
  const std::size_t n = dist.size();
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("alias sampler supports at most 2^32 - 1 atoms");
  }
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small;
  std::vector<std::uint32_t> large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = dist[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  // Leftovers are rounding residue of columns that should be full.
  for (auto i : small) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

SampleBatch sample_batch(const AliasSampler& sampler, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw InvalidArgument("batch size must be >= 1");
  CounterRng rng(seed);
  SampleBatch batch(m);
  for (auto& atom : batch) atom = sampler.draw(rng);
  return batch;
}

SampleBatch sample_batch(const DiscreteDistribution& dist, std::size_t m, std::uint64_t seed) {
  return sample_batch(AliasSampler(dist), m, seed);
}

bool has_repeat(std::span<const std::uint32_t> atoms) {
  std::vector<std::uint32_t> sorted(atoms.begin(), atoms.end());
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

double uniform_collision_probability(std::size_t n, std::size_t m) {
  if (n == 0) throw InvalidArgument("uniform support must be >= 1");
  if (m <= 1) return 0.0;
  if (m > n) return 1.0;
  const double nd = static_cast<double>(n);
  double log_no_collision = 0.0;
  for (std::size_t i = 1; i < m; ++i) log_no_collision += std::log1p(-static_cast<double>(i) / nd);
  return -std::expm1(log_no_collision);
}

double dp_collision_probability(std::span<const double> probs, std::size_t m) {
  if (m <= 1) return 0.0;
  // distinct[k]: probability that k draws from the renormalized prefix
  // p_1..p_i are pairwise distinct.
  std::vector<double> distinct(m + 1, 0.0);
  std::vector<double> powers(m + 1, 1.0);
  distinct[0] = 1.0;
  double prefix = 0.0;
  double comp = 0.0;
  std::size_t seen = 0;
  for (const double p : probs) {
    if (p <= 0.0) continue;
    const double previous = prefix;
    const double y = p - comp;
    const double t = prefix + y;
    comp = (t - prefix) - y;
    prefix = t;

    const double keep = previous / prefix;  // mass share of the old prefix
    const double add = p / prefix;          // mass share of the new atom
    ++seen;
    const std::size_t top = std::min(m, seen);
    for (std::size_t k = 1; k <= top; ++k) powers[k] = powers[k - 1] * keep;
    for (std::size_t k = top; k >= 1; --k) {
      distinct[k] = powers[k] * distinct[k] +
                    static_cast<double>(k) * add * powers[k - 1] * distinct[k - 1];
    }
  }
  if (seen < m) return 1.0;
  return std::clamp(1.0 - distinct[m], 0.0, 1.0);
}

double exact_collision_probability(const DiscreteDistribution& dist, std::size_t m) {
  if (m == 0) throw InvalidArgument("batch size must be >= 1");
  if (m == 1) return 0.0;
  if (m > dist.support_size()) return 1.0;
  if (dist.is_uniform()) return uniform_collision_probability(dist.size(), m);
  const double cost = static_cast<double>(dist.size()) * static_cast<double>(m);
  if (cost > kExactCostLimit) {
    throw ResourceLimit("exact collision probability needs n*m = " + std::to_string(cost) +
                        " > 1e9 operations; use Monte Carlo estimation instead");
  }
  return dp_collision_probability(dist.probs(), m);
}

CollisionEstimate wilson_estimate(std::uint64_t collided, std::uint64_t trials) {
  if (trials == 0) throw InvalidArgument("estimate needs at least one trial");
  if (collided > trials) throw InvalidArgument("collided count exceeds trial count");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(collided) / n;
  const double z2 = kWilsonZ * kWilsonZ;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = kWilsonZ * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;

  CollisionEstimate est;
  est.trials = trials;
  est.collided = collided;
  est.point = p;
  est.ci_low = std::min(std::max(0.0, center - half), p);
  est.ci_high = std::max(std::min(1.0, center + half), p);
  return est;
}

std::uint64_t count_colliding_trials(const AliasSampler& sampler, std::size_t m,
                                     std::uint64_t first, std::uint64_t count,
                                     std::uint64_t seed, unsigned threads) {
  if (m == 0) throw InvalidArgument("batch size must be >= 1");
  if (m == 1 || count == 0) return 0;
  const std::size_t atoms = sampler.size();
  const unsigned workers = static_cast<unsigned>(
      std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(1, count / 64)));
  std::vector<std::uint64_t> per_worker(workers, 0);

  parallel_slices(count, workers, [&](unsigned worker, std::size_t begin, std::size_t end) {
    std::uint64_t hits = 0;
    if (atoms <= kStampLimit) {
      std::vector<std::uint32_t> stamp(atoms, 0);
      std::uint32_t generation = 0;
      for (std::size_t t = begin; t < end; ++t) {
        if (++generation == 0) {
          std::fill(stamp.begin(), stamp.end(), 0);
          generation = 1;
        }
        CounterRng rng(trial_seed(seed, first + t));
        for (std::size_t i = 0; i < m; ++i) {
          const auto atom = sampler.draw(rng);
          if (stamp[atom] == generation) {
            ++hits;
            break;
          }
          stamp[atom] = generation;
        }
      }
    } else {
      std::unordered_set<std::uint32_t> seen;
      seen.reserve(m * 2);
      for (std::size_t t = begin; t < end; ++t) {
        seen.clear();
        CounterRng rng(trial_seed(seed, first + t));
        for (std::size_t i = 0; i < m; ++i) {
          if (!seen.insert(sampler.draw(rng)).second) {
            ++hits;
            break;
          }
        }
      }
    }
    per_worker[worker] = hits;
  });

  std::uint64_t total = 0;
  for (auto h : per_worker) total += h;
  return total;
}

CollisionEstimate monte_carlo_collision(const DiscreteDistribution& dist, std::size_t m,
                                        std::uint64_t trials, std::uint64_t seed, unsigned threads) {
  if (trials == 0) throw InvalidArgument("trials must be >= 1");
  if (m == 0) throw InvalidArgument("batch size must be >= 1");
  const AliasSampler sampler(dist);
  return wilson_estimate(count_colliding_trials(sampler, m, 0, trials, seed, threads), trials);
}

double beta(const DiscreteDistribution& dist) {
  if (dist.is_uniform()) return static_cast<double>(dist.size());
  double sum = 0.0;
  double comp = 0.0;
  for (const double p : dist.probs()) {
    const double y = p * p - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return 1.0 / sum;
}

}  // namespace bcensus
