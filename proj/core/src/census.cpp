#include "bcensus/census.hpp"

#include <algorithm>
#include <cmath>

#include "bcensus/errors.hpp"
#include "bcensus/parallel.hpp"

namespace bcensus {

struct SampleSource::State {
  std::optional<DiscreteDistribution> dist;
  std::optional<AliasSampler> sampler;
  std::vector<ItemVector> items;
  std::vector<std::string_view> ids;
  // Upper triangle of the pool distance matrix, row-major, or empty.
  std::vector<double> cache;

  std::size_t tri_index(std::size_t i, std::size_t j) const noexcept {
    const std::size_t n = items.size();
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
  }
};

namespace {

// Draws `count` distinct positions of [0, n) into scratch[0..count) by a
// partial Fisher-Yates shuffle, then undoes the swaps so the scratch stays
// the identity permutation between calls.
void draw_distinct(std::size_t n, std::size_t count, CounterRng& rng, std::vector<std::uint32_t>& scratch,
                   std::vector<std::uint32_t>& out, std::vector<std::uint32_t>& swaps) {
  if (scratch.size() != n) {
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = static_cast<std::uint32_t>(i);
  }
  swaps.resize(count);
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::uint32_t>(i + rng.below(n - i));
    swaps[i] = j;
    std::swap(scratch[i], scratch[j]);
    out[i] = scratch[i];
  }
  for (std::size_t i = count; i-- > 0;) std::swap(scratch[i], scratch[swaps[i]]);
}

std::vector<PairCandidate> flag_pool_batch(const SampleSource& source, std::span<const std::uint32_t> positions,
                                           std::size_t k, unsigned threads) {
  const auto items = source.items();
  std::vector<std::string_view> ids;
  ids.reserve(positions.size());
  for (const auto p : positions) ids.push_back(items[p].id);

  std::vector<IndexedPair> pairs;
  if (source.has_distance_cache()) {
    pairs = select_closest_pairs(
        ids, k, [&](std::size_t i, std::size_t j) { return source.distance(positions[i], positions[j]); }, threads);
  } else {
    pairs = select_closest_pairs(
        ids, k,
        [&](std::size_t i, std::size_t j) {
          return std::sqrt(squared_distance(items[positions[i]].values, items[positions[j]].values));
        },
        threads);
  }
  std::vector<PairCandidate> flagged;
  flagged.reserve(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    flagged.push_back({std::string(ids[pairs[r].a]), std::string(ids[pairs[r].b]), pairs[r].distance, r + 1});
  }
  return flagged;
}

void check_batch(const SampleSource& source, std::size_t batch_size) {
  if (batch_size < 2) throw InvalidArgument("batch size must be >= 2");
  if (!source.is_synthetic() && batch_size > source.pool_size()) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) + " exceeds pool size " +
                          std::to_string(source.pool_size()));
  }
}

}  // namespace

SampleSource SampleSource::synthetic(DiscreteDistribution dist) {
  auto state = std::make_shared<State>();
  state->sampler.emplace(dist);
  state->dist.emplace(std::move(dist));
  return SampleSource(std::move(state));
}

SampleSource SampleSource::pool(std::vector<ItemVector> items, unsigned threads) {
  if (items.size() < 2) throw InvalidArgument("a sample pool needs at least 2 items");
  validate_corpus(items);
  auto state = std::make_shared<State>();
  state->items = std::move(items);
  const std::size_t n = state->items.size();
  state->ids.reserve(n);
  for (const auto& item : state->items) state->ids.push_back(item.id);

  if (n <= kDistanceCacheLimit) {
    state->cache.resize(n * (n - 1) / 2);
    const unsigned workers = resolve_threads(threads);
    parallel_slices(workers, workers, [&](unsigned, std::size_t w_begin, std::size_t w_end) {
      for (std::size_t w = w_begin; w < w_end; ++w) {
        for (std::size_t i = w; i < n; i += workers) {
          const auto& a = state->items[i].values;
          std::size_t idx = state->tri_index(i, i + 1);
          for (std::size_t j = i + 1; j < n; ++j) {
            state->cache[idx++] = std::sqrt(squared_distance(a, state->items[j].values));
          }
        }
      }
    });
  }
  return SampleSource(std::move(state));
}

bool SampleSource::is_synthetic() const noexcept { return state_->dist.has_value(); }

const DiscreteDistribution& SampleSource::distribution() const {
  if (!state_->dist) throw InvalidArgument("pool sources have no explicit distribution");
  return *state_->dist;
}

const AliasSampler& SampleSource::sampler() const {
  if (!state_->sampler) throw InvalidArgument("pool sources have no atom sampler");
  return *state_->sampler;
}

std::span<const ItemVector> SampleSource::items() const { return state_->items; }

std::size_t SampleSource::pool_size() const { return state_->items.size(); }

std::size_t SampleSource::max_batch() const noexcept {
  return is_synthetic() ? std::numeric_limits<std::uint32_t>::max() : state_->items.size();
}

bool SampleSource::has_distance_cache() const noexcept { return !state_->cache.empty(); }

double SampleSource::distance(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  if (i > j) std::swap(i, j);
  if (!state_->cache.empty()) return state_->cache[state_->tri_index(i, j)];
  return std::sqrt(squared_distance(state_->items[i].values, state_->items[j].values));
}

std::string_view to_string(Resolution r) noexcept {
  switch (r) {
    case Resolution::pending: return "pending";
    case Resolution::collided: return "collided";
    case Resolution::clean: return "clean";
  }
  return "pending";
}

Resolution parse_resolution(std::string_view text) {
  if (text == "pending") return Resolution::pending;
  if (text == "collided") return Resolution::collided;
  if (text == "clean") return Resolution::clean;
  throw InvalidInput("unknown trial resolution '" + std::string(text) + "'");
}

Resolution resolve_flagged(std::span<const PairCandidate> flagged, const PairJudge& judge) {
  bool all_judged = true;
  for (const auto& pair : flagged) {
    const auto verdict = judge(pair);
    if (!verdict) {
      all_judged = false;
    } else if (*verdict) {
      return Resolution::collided;
    }
  }
  return all_judged ? Resolution::clean : Resolution::pending;
}

Trial run_trial(const SampleSource& source, std::size_t batch_size, const TrialMode& mode, std::uint64_t seed,
                const TrialOptions& options) {
  check_batch(source, batch_size);
  Trial trial;
  trial.batch_size = batch_size;
  trial.mode = mode;

  if (source.is_synthetic()) {
    trial.items = sample_batch(source.sampler(), batch_size, seed);
    trial.resolution = has_repeat(trial.items) ? Resolution::collided : Resolution::clean;
    return trial;
  }

  if (options.k == 0) throw InvalidArgument("k must be >= 1");
  CounterRng rng(seed);
  std::vector<std::uint32_t> scratch, swaps;
  draw_distinct(source.pool_size(), batch_size, rng, scratch, trial.items, swaps);
  trial.flagged = flag_pool_batch(source, trial.items, options.k, options.threads);

  if (mode.kind == TrialMode::Kind::automatic) {
    trial.resolution = !trial.flagged.empty() && trial.flagged.front().distance <= mode.threshold
                           ? Resolution::collided
                           : Resolution::clean;
  } else if (options.judge != nullptr) {
    trial.resolution = resolve_flagged(trial.flagged, *options.judge);
  }
  return trial;
}

namespace {

// Automatic pool trials collide iff the batch holds both ends of some pair
// within the threshold, which only needs the threshold graph of the pool.
std::uint64_t count_pool_auto_collisions(const SampleSource& source, std::size_t batch_size, std::uint64_t trials,
                                         double threshold, std::uint64_t seed, unsigned threads) {
  const std::size_t n = source.pool_size();
  std::vector<std::vector<std::uint32_t>> close(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (source.distance(i, j) <= threshold) close[i].push_back(static_cast<std::uint32_t>(j));
    }
  }

  const unsigned workers = static_cast<unsigned>(
      std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(1, trials / 64)));
  std::vector<std::uint64_t> hits(workers, 0);
  parallel_slices(trials, workers, [&](unsigned worker, std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> scratch, swaps, batch;
    std::vector<std::uint32_t> stamp(n, 0);
    std::uint32_t generation = 0;
    std::uint64_t local = 0;
    for (std::size_t t = begin; t < end; ++t) {
      if (++generation == 0) {
        std::fill(stamp.begin(), stamp.end(), 0);
        generation = 1;
      }
      CounterRng rng(trial_seed(seed, t));
      draw_distinct(n, batch_size, rng, scratch, batch, swaps);
      for (const auto p : batch) stamp[p] = generation;
      bool collided = false;
      for (const auto p : batch) {
        for (const auto q : close[p]) {
          if (stamp[q] == generation) {
            collided = true;
            break;
          }
        }
        if (collided) break;
      }
      local += collided ? 1 : 0;
    }
    hits[worker] = local;
  });
  std::uint64_t total = 0;
  for (auto h : hits) total += h;
  return total;
}

}  // namespace

GammaEstimate estimate_gamma(const SampleSource& source, std::size_t batch_size, std::uint64_t trials,
                             const TrialMode& mode, std::uint64_t seed, const TrialOptions& options) {
  if (trials == 0) throw InvalidArgument("trials must be >= 1");
  check_batch(source, batch_size);

  if (source.is_synthetic()) {
    const auto collided = count_colliding_trials(source.sampler(), batch_size, 0, trials, seed, options.threads);
    return {wilson_estimate(collided, trials), 0};
  }
  if (mode.kind == TrialMode::Kind::automatic && source.has_distance_cache()) {
    const auto collided =
        count_pool_auto_collisions(source, batch_size, trials, mode.threshold, seed, options.threads);
    return {wilson_estimate(collided, trials), 0};
  }

  std::uint64_t collided = 0;
  std::uint64_t pending = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto trial = run_trial(source, batch_size, mode, trial_seed(seed, t), options);
    if (trial.resolution == Resolution::pending) {
      ++pending;
    } else if (trial.resolution == Resolution::collided) {
      ++collided;
    }
  }
  if (pending == trials) {
    throw NoEstimate("all " + std::to_string(trials) + " trials at batch size " + std::to_string(batch_size) +
                     " are still pending review");
  }
  return {wilson_estimate(collided, trials - pending), pending};
}

std::string_view to_string(SearchPhase p) noexcept {
  return p == SearchPhase::doubling ? "doubling" : "bisecting";
}

SearchPhase parse_search_phase(std::string_view text) {
  if (text == "doubling") return SearchPhase::doubling;
  if (text == "bisecting") return SearchPhase::bisecting;
  throw InvalidInput("unknown search phase '" + std::string(text) + "'");
}

HalfCollisionSearch::HalfCollisionSearch(double target, std::size_t max_batch, std::size_t start)
    : target_(target), max_batch_(max_batch), next_(std::min(start, max_batch)) {
  if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("target probability must lie in (0, 1)");
  if (max_batch < 2) throw InvalidArgument("search needs room for batches of at least 2");
  if (start < 2) throw InvalidArgument("search must start at batch size >= 2");
}

std::optional<std::size_t> HalfCollisionSearch::next_probe() const noexcept {
  if (finished_) return std::nullopt;
  return next_;
}

bool HalfCollisionSearch::bracket_closed() const noexcept {
  return static_cast<double>(hi_ - lo_) <= std::max(1.0, 0.05 * static_cast<double>(hi_));
}

void HalfCollisionSearch::settle() {
  if (bracket_closed()) {
    finished_ = true;
    s_star_ = hi_;
  } else {
    next_ = lo_ + (hi_ - lo_) / 2;
  }
}

void HalfCollisionSearch::record(std::size_t batch_size, const CollisionEstimate& estimate, std::uint64_t pending) {
  if (finished_ || batch_size != next_) {
    throw InvalidArgument("search expected batch size " + std::to_string(next_) + ", got " +
                          std::to_string(batch_size));
  }
  trajectory_.push_back({batch_size, phase_, estimate, pending});
  if (phase_ == SearchPhase::doubling) {
    if (estimate.point >= target_) {
      hi_ = batch_size;
      phase_ = SearchPhase::bisecting;
      settle();
    } else if (batch_size >= max_batch_) {
      lo_ = batch_size;
      finished_ = true;
      pool_limited_ = true;
    } else {
      lo_ = batch_size;
      next_ = batch_size > max_batch_ / 2 ? max_batch_ : 2 * batch_size;
    }
    return;
  }
  if (estimate.midpoint() >= target_) {
    hi_ = batch_size;
  } else {
    lo_ = batch_size;
  }
  settle();
}

HalfCollisionResult find_half_collision_batch(const SampleSource& source, const SearchConfig& config) {
  if (config.trials_per_probe == 0) throw InvalidArgument("trials per probe must be >= 1");
  HalfCollisionSearch search(config.target, source.max_batch(), config.start_batch);
  const TrialOptions options{config.k, config.judge, config.threads};
  while (const auto batch = search.next_probe()) {
    const auto g = estimate_gamma(source, *batch, config.trials_per_probe, config.mode,
                                  probe_seed(config.seed, *batch), options);
    search.record(*batch, g.estimate, g.pending);
  }
  HalfCollisionResult result;
  result.s_star = search.s_star();
  result.trajectory = search.trajectory();
  result.pool_limited = search.pool_limited();
  if (result.pool_limited) result.largest_batch = result.trajectory.back().batch_size;
  return result;
}

SupportReport support_report(std::size_t batch_size, double gamma, double rho) {
  SupportReport r;
  r.batch_size = batch_size;
  r.gamma = gamma;
  r.heuristic_support = static_cast<double>(batch_size) * static_cast<double>(batch_size);
  r.bounds = make_bounds_report(batch_size, gamma, rho);
  return r;
}

nlohmann::json to_json(const CollisionEstimate& e) {
  return {{"trials", e.trials}, {"collided", e.collided}, {"point", e.point}, {"ci_low", e.ci_low},
          {"ci_high", e.ci_high}};
}

CollisionEstimate collision_estimate_from_json(const nlohmann::json& j) {
  CollisionEstimate e;
  e.trials = j.at("trials").get<std::uint64_t>();
  e.collided = j.at("collided").get<std::uint64_t>();
  e.point = j.at("point").get<double>();
  e.ci_low = j.at("ci_low").get<double>();
  e.ci_high = j.at("ci_high").get<double>();
  return e;
}

nlohmann::json to_json(const PairCandidate& p) {
  return {{"id_a", p.id_a}, {"id_b", p.id_b}, {"distance", p.distance}, {"rank", p.rank}};
}

PairCandidate pair_candidate_from_json(const nlohmann::json& j) {
  return {j.at("id_a").get<std::string>(), j.at("id_b").get<std::string>(), j.at("distance").get<double>(),
          j.at("rank").get<std::size_t>()};
}

nlohmann::json to_json(const ProbePoint& p) {
  return {{"batch_size", p.batch_size},
          {"phase", std::string(to_string(p.phase))},
          {"estimate", to_json(p.estimate)},
          {"pending", p.pending}};
}

nlohmann::json to_json(const SupportReport& r) {
  return {{"batch_size", r.batch_size},
          {"gamma", r.gamma},
          {"heuristic_support", r.heuristic_support},
          {"bounds", to_json(r.bounds)},
          {"caveat", r.caveat}};
}

SupportReport support_report_from_json(const nlohmann::json& j) {
  SupportReport r;
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.gamma = j.at("gamma").get<double>();
  r.heuristic_support = j.at("heuristic_support").get<double>();
  r.bounds = bounds_report_from_json(j.at("bounds"));
  r.caveat = j.at("caveat").get<std::string>();
  return r;
}

}  // namespace bcensus
