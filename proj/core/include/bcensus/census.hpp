#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcensus/bounds.hpp"
#include "bcensus/distribution.hpp"
#include "bcensus/similarity.hpp"

namespace bcensus {

// What census trials draw from: a known distribution over atoms, or a finite
// pool of generated items compared through a metric. Copies share state.
class SampleSource {
 public:
  // Pools up to this size get a precomputed pairwise distance table.
  static constexpr std::size_t kDistanceCacheLimit = 4096;

  static SampleSource synthetic(DiscreteDistribution dist);
  // Needs at least 2 items; validates the corpus.
  static SampleSource pool(std::vector<ItemVector> items, unsigned threads = 0);

  bool is_synthetic() const noexcept;
  const DiscreteDistribution& distribution() const;
  const AliasSampler& sampler() const;
  std::span<const ItemVector> items() const;
  std::size_t pool_size() const;
  // Largest batch a trial may request.
  std::size_t max_batch() const noexcept;
  bool has_distance_cache() const noexcept;
  // L2 distance between pool positions i != j.
  double distance(std::size_t i, std::size_t j) const;

 private:
  struct State;
  explicit SampleSource(std::shared_ptr<const State> state) : state_(std::move(state)) {}
  std::shared_ptr<const State> state_;
};

// Collision decision rule for pool trials. Synthetic trials ignore it.
struct TrialMode {
  enum class Kind { automatic, human };
  Kind kind = Kind::automatic;
  double threshold = 0.0;  // automatic: collided iff closest flagged distance <= threshold

  static TrialMode automatic(double threshold) { return {Kind::automatic, threshold}; }
  static TrialMode human() { return {Kind::human, 0.0}; }
};

enum class Resolution { pending, collided, clean };

std::string_view to_string(Resolution r) noexcept;
Resolution parse_resolution(std::string_view text);

struct Trial {
  std::uint64_t trial_id = 0;
  std::size_t batch_size = 0;
  // Atom ids (synthetic) or pool positions, in draw order.
  std::vector<std::uint32_t> items;
  std::vector<PairCandidate> flagged;
  Resolution resolution = Resolution::pending;
  TrialMode mode;
};

// Human verdict lookup: true = duplicate, false = not a duplicate, empty =
// not judged yet.
using PairJudge = std::function<std::optional<bool>(const PairCandidate&)>;

// collided if any flagged pair is judged duplicate; clean once every flagged
// pair is judged otherwise; pending in between.
Resolution resolve_flagged(std::span<const PairCandidate> flagged, const PairJudge& judge);

inline constexpr std::size_t kDefaultFlaggedPairs = 20;

struct TrialOptions {
  std::size_t k = kDefaultFlaggedPairs;
  const PairJudge* judge = nullptr;  // human mode; unresolved trials stay pending without one
  unsigned threads = 1;
};

// One batch of `batch_size` draws from CounterRng(seed). Synthetic sources
// draw i.i.d. atoms and collide on equal atom ids; pools draw distinct
// positions uniformly without replacement and flag the k closest pairs.
Trial run_trial(const SampleSource& source, std::size_t batch_size, const TrialMode& mode, std::uint64_t seed,
                const TrialOptions& options = {});

struct GammaEstimate {
  CollisionEstimate estimate;  // over resolved trials only
  std::uint64_t pending = 0;
};

// Trial t uses seed trial_seed(seed, t); the total equals the sum of the
// corresponding run_trial outcomes. Throws NoEstimate when every trial is
// pending.
GammaEstimate estimate_gamma(const SampleSource& source, std::size_t batch_size, std::uint64_t trials,
                             const TrialMode& mode, std::uint64_t seed, const TrialOptions& options = {});

// Seed handed to estimate_gamma for the probe at `batch_size`.
constexpr std::uint64_t probe_seed(std::uint64_t seed, std::size_t batch_size) noexcept {
  return seed ^ (static_cast<std::uint64_t>(batch_size) << 32);
}

enum class SearchPhase { doubling, bisecting };

std::string_view to_string(SearchPhase p) noexcept;
SearchPhase parse_search_phase(std::string_view text);

struct ProbePoint {
  std::size_t batch_size = 0;
  SearchPhase phase = SearchPhase::doubling;
  CollisionEstimate estimate;
  std::uint64_t pending = 0;
};

// Step-wise search for the smallest batch size whose collision probability
// reaches `target`. Doubling from `start` until the point estimate reaches
// the target, then bisection on the Wilson midpoint until the bracket is no
// wider than max(1, 5% of its upper end). Batch size 1 is the implicit lower
// end since a single draw never collides.
class HalfCollisionSearch {
 public:
  explicit HalfCollisionSearch(double target, std::size_t max_batch = std::numeric_limits<std::size_t>::max(),
                               std::size_t start = 2);

  bool done() const noexcept { return finished_; }
  // Batch size to probe next; empty once done.
  std::optional<std::size_t> next_probe() const noexcept;
  // `batch_size` must equal next_probe().
  void record(std::size_t batch_size, const CollisionEstimate& estimate, std::uint64_t pending = 0);

  std::optional<std::size_t> s_star() const noexcept { return s_star_; }
  // True when the largest admissible batch never reached the target.
  bool pool_limited() const noexcept { return pool_limited_; }
  SearchPhase phase() const noexcept { return phase_; }
  const std::vector<ProbePoint>& trajectory() const noexcept { return trajectory_; }

 private:
  bool bracket_closed() const noexcept;
  void settle();

  double target_;
  std::size_t max_batch_;
  SearchPhase phase_ = SearchPhase::doubling;
  std::size_t next_;
  std::size_t lo_ = 1;
  std::size_t hi_ = 0;
  bool finished_ = false;
  bool pool_limited_ = false;
  std::optional<std::size_t> s_star_;
  std::vector<ProbePoint> trajectory_;
};

struct SearchConfig {
  double target = 0.5;
  std::uint64_t trials_per_probe = 10000;
  TrialMode mode;
  std::uint64_t seed = 0;
  std::size_t k = kDefaultFlaggedPairs;
  std::size_t start_batch = 2;
  unsigned threads = 0;
  const PairJudge* judge = nullptr;
};

inline constexpr std::uint64_t kDefaultAutoTrials = 10000;
inline constexpr std::uint64_t kDefaultHumanTrials = 200;

struct HalfCollisionResult {
  std::optional<std::size_t> s_star;
  std::vector<ProbePoint> trajectory;
  bool pool_limited = false;
  // Pool-limited runs only: the largest batch tried, whose square the
  // support is estimated to exceed.
  std::size_t largest_batch = 0;
};

HalfCollisionResult find_half_collision_batch(const SampleSource& source, const SearchConfig& config);

inline constexpr std::string_view kNonUniformityCaveat =
    "Collision statistics cannot tell a small support apart from mass piled on a few outputs: "
    "one heavy item produces early duplicates even when the rest of the support is huge.";

struct SupportReport {
  std::size_t batch_size = 0;
  double gamma = 0.0;
  double heuristic_support = 0.0;  // batch_size^2
  BoundsReport bounds;
  std::string caveat{kNonUniformityCaveat};
};

// From a found s_star (gamma = target) or any observed (batch size, gamma).
SupportReport support_report(std::size_t batch_size, double gamma, double rho = 1.0);

nlohmann::json to_json(const CollisionEstimate& e);
CollisionEstimate collision_estimate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PairCandidate& p);
PairCandidate pair_candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbePoint& p);
nlohmann::json to_json(const SupportReport& r);
SupportReport support_report_from_json(const nlohmann::json& j);

}  // namespace bcensus
