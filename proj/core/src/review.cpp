#include "bcensus/review.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <set>
#include <unordered_set>

#include <fcntl.h>
#include <unistd.h>

#include "bcensus/errors.hpp"

namespace bcensus {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xCBF29CE484222325ULL) {
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t system_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string_view to_string(VerdictLabel label) noexcept {
  switch (label) {
    case VerdictLabel::duplicate: return "duplicate";
    case VerdictLabel::distinct: return "distinct";
    case VerdictLabel::artifact: return "artifact";
  }
  return "distinct";
}

VerdictLabel parse_verdict_label(std::string_view text) {
  if (text == "duplicate") return VerdictLabel::duplicate;
  if (text == "distinct") return VerdictLabel::distinct;
  if (text == "artifact") return VerdictLabel::artifact;
  throw InvalidArgument("unknown verdict label '" + std::string(text) + "' (expected duplicate, distinct or artifact)");
}

std::string make_pair_key(std::string_view id_a, std::string_view id_b) {
  if (id_b < id_a) std::swap(id_a, id_b);
  std::uint64_t h = fnv1a(id_a);
  h = fnv1a(std::string_view("\0", 1), h);
  h = fnv1a(id_b, h);
  return hex64(h);
}

nlohmann::json to_json(const Verdict& v) {
  return {{"seq", v.seq},           {"pair_key", v.pair_key},
          {"id_a", v.id_a},         {"id_b", v.id_b},
          {"distance", v.distance}, {"label", std::string(to_string(v.label))},
          {"note", v.note},         {"timestamp", v.timestamp}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
  try {
    Verdict v;
    v.seq = j.at("seq").get<std::uint64_t>();
    v.pair_key = j.at("pair_key").get<std::string>();
    v.id_a = j.at("id_a").get<std::string>();
    v.id_b = j.at("id_b").get<std::string>();
    v.distance = j.at("distance").get<double>();
    v.label = parse_verdict_label(j.at("label").get<std::string>());
    v.note = j.value("note", std::string{});
    v.timestamp = j.at("timestamp").get<std::int64_t>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed verdict: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidInput(std::string("malformed verdict: ") + e.what());
  }
}

std::string verdict_log_line(const Verdict& v) { return to_json(v).dump() + "\n"; }

std::vector<Verdict> parse_verdict_log(std::string_view text) {
  std::vector<Verdict> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) break;  // torn tail
    ++line_no;
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("verdict log line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(verdict_from_json(j));
  }
  return out;
}

std::vector<Verdict> read_verdict_log(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return parse_verdict_log(read_file_bytes(path));
}

void repair_verdict_log(const fs::path& path) {
  if (!fs::exists(path)) return;
  const auto bytes = read_file_bytes(path);
  const auto last = bytes.rfind('\n');
  const std::size_t keep = last == std::string::npos ? 0 : last + 1;
  if (keep != bytes.size()) fs::resize_file(path, keep);
}

std::string verdict_log_digest(std::span<const Verdict> records) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& v : records) h = fnv1a(verdict_log_line(v), h);
  return hex64(h);
}

VerdictLogWriter::VerdictLogWriter(fs::path path) : path_(std::move(path)) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd_ < 0) throw InvalidInput("cannot open verdict log " + path_.string());
}

VerdictLogWriter::~VerdictLogWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void VerdictLogWriter::append(const Verdict& v) {
  const auto line = verdict_log_line(v);
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd_, line.data() + written, line.size() - written);
    if (n <= 0) throw InvalidInput("failed to append to verdict log " + path_.string());
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw InvalidInput("failed to sync verdict log " + path_.string());
}

ArtifactRate artifact_rate(std::span<const Verdict> active) {
  std::unordered_set<std::string_view> reviewed;
  std::unordered_set<std::string_view> artifacts;
  for (const auto& v : active) {
    reviewed.insert(v.id_a);
    reviewed.insert(v.id_b);
    if (v.label == VerdictLabel::artifact) {
      artifacts.insert(v.id_a);
      artifacts.insert(v.id_b);
    }
  }
  if (reviewed.empty()) throw NoEstimate("no samples have been reviewed yet");
  ArtifactRate r;
  r.artifacts = artifacts.size();
  r.reviewed = reviewed.size();
  r.rate = static_cast<double>(r.artifacts) / static_cast<double>(r.reviewed);
  return r;
}

std::optional<double> calibrate_threshold(std::span<const Verdict> active) {
  std::optional<double> threshold;
  for (const auto& v : active) {
    if (v.label == VerdictLabel::duplicate) threshold = std::max(threshold.value_or(v.distance), v.distance);
  }
  return threshold;
}

PairFilter parse_pair_filter(std::string_view text) {
  if (text == "pending") return PairFilter::pending;
  if (text == "resolved") return PairFilter::resolved;
  if (text == "all") return PairFilter::all;
  throw InvalidArgument("unknown pair state '" + std::string(text) + "' (expected pending, resolved or all)");
}

ReviewState::ReviewState(CensusConfig config, SampleSource source, unsigned threads)
    : config_(std::move(config)), source_(std::move(source)), threads_(threads) {
  if (config_.mode.kind != TrialMode::Kind::human) throw InvalidArgument("review sessions must be human-mode");
  if (source_.is_synthetic()) throw InvalidArgument("human review needs a pool of generated items");
  if (config_.trials_per_probe == 0) throw InvalidArgument("trials per probe must be >= 1");
  if (config_.k == 0) throw InvalidArgument("k must be >= 1");
  rebuild();
}

ReviewState::ProbeState ReviewState::generate_probe(std::size_t index, std::size_t batch_size,
                                                    SearchPhase phase) const {
  ProbeState probe;
  probe.record.batch_size = batch_size;
  probe.record.phase = phase;
  probe.record.trials.reserve(config_.trials_per_probe);
  probe.keys.reserve(config_.trials_per_probe);
  const auto seed = probe_seed(config_.seed, batch_size);
  const TrialOptions options{config_.k, nullptr, threads_};
  for (std::uint64_t t = 0; t < config_.trials_per_probe; ++t) {
    auto trial = run_trial(source_, batch_size, config_.mode, trial_seed(seed, t), options);
    trial.trial_id = index * config_.trials_per_probe + t;
    trial.items.clear();
    trial.items.shrink_to_fit();
    std::vector<std::string> keys;
    keys.reserve(trial.flagged.size());
    for (const auto& p : trial.flagged) keys.push_back(make_pair_key(p.id_a, p.id_b));
    probe.keys.push_back(std::move(keys));
    probe.record.trials.push_back(std::move(trial));
  }
  return probe;
}

void ReviewState::rebuild() {
  HalfCollisionSearch search(config_.target, source_.max_batch(), config_.start_batch);
  std::size_t index = 0;
  while (const auto next = search.next_probe()) {
    if (index == probes_.size() || probes_[index].record.batch_size != *next) {
      probes_.resize(index);
      probes_.push_back(generate_probe(index, *next, search.phase()));
    }
    auto& probe = probes_[index];
    probe.record.phase = search.phase();
    std::uint64_t collided = 0;
    std::uint64_t pending = 0;
    for (std::size_t t = 0; t < probe.record.trials.size(); ++t) {
      auto& trial = probe.record.trials[t];
      const auto& keys = probe.keys[t];
      bool all_judged = true;
      bool duplicate = false;
      for (const auto& key : keys) {
        const auto it = active_.find(key);
        if (it == active_.end()) {
          all_judged = false;
        } else if (history_[it->second].label == VerdictLabel::duplicate) {
          duplicate = true;
          break;
        }
      }
      trial.resolution = duplicate ? Resolution::collided : all_judged ? Resolution::clean : Resolution::pending;
      if (trial.resolution == Resolution::pending) ++pending;
      if (trial.resolution == Resolution::collided) ++collided;
    }
    const auto resolved = probe.record.trials.size() - pending;
    probe.record.pending = pending;
    probe.record.estimate =
        resolved > 0 ? std::optional(wilson_estimate(collided, resolved)) : std::optional<CollisionEstimate>();
    ++index;
    if (pending > 0) break;
    search.record(*next, *probe.record.estimate, 0);
  }
  probes_.resize(index);
  finished_ = search.done();
  pool_limited_ = search.pool_limited();
  s_star_ = search.s_star();

  index_.clear();
  for (const auto& probe : probes_) {
    for (std::size_t t = 0; t < probe.record.trials.size(); ++t) {
      const auto& trial = probe.record.trials[t];
      for (std::size_t r = 0; r < trial.flagged.size(); ++r) {
        const auto& key = probe.keys[t][r];
        auto [it, inserted] = index_.try_emplace(key);
        if (inserted) {
          it->second.key = key;
          it->second.id_a = trial.flagged[r].id_a;
          it->second.id_b = trial.flagged[r].id_b;
          it->second.distance = trial.flagged[r].distance;
        }
        it->second.trial_ids.push_back(trial.trial_id);
      }
    }
  }
}

const PairInfo* ReviewState::find_pair(std::string_view key) const {
  const auto it = index_.find(key);
  return it == index_.end() ? nullptr : &it->second;
}

Verdict ReviewState::make_verdict(std::string_view key, VerdictLabel label, std::string note,
                                  std::int64_t timestamp) const {
  const auto* pair = find_pair(key);
  if (pair == nullptr) throw NotFound("unknown pair key '" + std::string(key) + "'");
  Verdict v;
  v.seq = history_.size() + 1;
  v.pair_key = pair->key;
  v.id_a = pair->id_a;
  v.id_b = pair->id_b;
  v.distance = pair->distance;
  v.label = label;
  v.note = std::move(note);
  v.timestamp = timestamp;
  return v;
}

void ReviewState::apply(const Verdict& v) {
  if (find_pair(v.pair_key) == nullptr) throw NotFound("unknown pair key '" + v.pair_key + "'");
  history_.push_back(v);
  active_[v.pair_key] = history_.size() - 1;
  rebuild();
}

std::vector<Verdict> ReviewState::active_verdicts() const {
  std::vector<Verdict> out;
  out.reserve(active_.size());
  for (const auto& [key, pos] : active_) out.push_back(history_[pos]);
  std::sort(out.begin(), out.end(), [](const Verdict& a, const Verdict& b) { return a.pair_key < b.pair_key; });
  return out;
}

std::optional<VerdictLabel> ReviewState::label_of(std::string_view key) const {
  const auto it = active_.find(std::string(key));
  if (it == active_.end()) return std::nullopt;
  return history_[it->second].label;
}

ArtifactRate ReviewState::artifact_rate() const { return bcensus::artifact_rate(active_verdicts()); }

std::vector<PairInfo> ReviewState::pairs(PairFilter filter, std::size_t limit) const {
  std::vector<PairInfo> out;
  if (filter == PairFilter::pending) {
    if (finished_ || probes_.empty()) return out;
    const auto& probe = probes_.back();
    std::unordered_set<std::string_view> seen;
    for (std::size_t t = 0; t < probe.record.trials.size() && out.size() < limit; ++t) {
      if (probe.record.trials[t].resolution != Resolution::pending) continue;
      for (const auto& key : probe.keys[t]) {
        if (out.size() >= limit) break;
        if (active_.contains(key) || !seen.insert(key).second) continue;
        out.push_back(index_.find(key)->second);
      }
    }
    return out;
  }
  for (const auto& [key, info] : index_) {
    if (out.size() >= limit) break;
    if (filter == PairFilter::resolved && !active_.contains(key)) continue;
    out.push_back(info);
  }
  return out;
}

CensusSession ReviewState::snapshot(const std::string& log_file) const {
  CensusSession s;
  s.config = config_;
  for (const auto& probe : probes_) s.probes.push_back(probe.record);
  s.s_star = s_star_;
  s.pool_limited = pool_limited_;
  if (pool_limited_ && !probes_.empty()) s.largest_batch = probes_.back().record.batch_size;
  if (s_star_) {
    const double s_val = static_cast<double>(*s_star_);
    s.support_estimate = s_val * s_val;
    s.report = support_report(*s_star_, config_.target, config_.rho);
  }
  s.verdict_log = VerdictLogRef{log_file, history_.size(), verdict_log_digest(history_)};
  const auto active = active_verdicts();
  if (active.empty()) {
    s.artifacts = ArtifactTally{0, 0};
  } else {
    const auto rate = bcensus::artifact_rate(active);
    s.artifacts = ArtifactTally{rate.artifacts, rate.reviewed};
  }
  return s;
}

nlohmann::json ReviewState::stats_json() const {
  nlohmann::json trajectory = nlohmann::json::array();
  for (const auto& probe : probes_) {
    trajectory.push_back({
        {"batch_size", probe.record.batch_size},
        {"phase", std::string(to_string(probe.record.phase))},
        {"estimate", probe.record.estimate ? to_json(*probe.record.estimate) : nlohmann::json(nullptr)},
        {"pending", probe.record.pending},
        {"trials", probe.record.trials.size()},
    });
  }
  nlohmann::json current = nullptr;
  if (!finished_ && !probes_.empty()) current = trajectory.back();

  nlohmann::json artifacts = {{"count", 0}, {"reviewed", 0}, {"rate", nullptr}};
  const auto active = active_verdicts();
  if (!active.empty()) {
    const auto rate = bcensus::artifact_rate(active);
    artifacts = {{"count", rate.artifacts}, {"reviewed", rate.reviewed}, {"rate", rate.rate}};
  }

  nlohmann::json j = {
      {"finished", finished_},
      {"current_probe", std::move(current)},
      {"trajectory", std::move(trajectory)},
      {"s_star", s_star_ ? nlohmann::json(*s_star_) : nlohmann::json(nullptr)},
      {"pool_limited", pool_limited_},
      {"artifacts", std::move(artifacts)},
      {"verdicts", {{"active", active_.size()}, {"history", history_.size()}}},
  };
  if (s_star_) {
    const double s_val = static_cast<double>(*s_star_);
    j["support_estimate"] = s_val * s_val;
    j["report"] = to_json(support_report(*s_star_, config_.target, config_.rho));
  } else {
    j["support_estimate"] = nullptr;
    j["report"] = nullptr;
  }
  return j;
}

namespace {

std::string log_file_for(const fs::path& session_path) {
  return session_path.filename().string() + ".verdicts.jsonl";
}

}  // namespace

CensusSession create_human_session(const fs::path& session_path, const CensusConfig& config, unsigned threads) {
  auto source = build_source(config.source, config.center, threads);
  ReviewState state(config, std::move(source), threads);
  const auto log_file = log_file_for(session_path);
  const auto log_path = session_path.parent_path() / log_file;
  write_file_atomic(log_path, "");
  auto session = state.snapshot(log_file);
  write_session(session_path, session);
  return session;
}

ReviewService::ReviewService(fs::path session_path, ReviewServiceOptions options)
    : session_path_(std::move(session_path)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = system_seconds;
  CensusSession session = read_session(session_path_);
  if (session.config.mode.kind != TrialMode::Kind::human) {
    throw InvalidInput(session_path_.string() + " is not a human-mode session");
  }
  if (!session.verdict_log) throw InvalidInput(session_path_.string() + " has no verdict log reference");
  log_file_ = session.verdict_log->file;
  log_path_ = session_path_.parent_path() / log_file_;

  repair_verdict_log(log_path_);
  const auto log = read_verdict_log(log_path_);
  if (log.size() < session.verdict_log->records) {
    throw InvalidInput("verdict log " + log_path_.string() + " has " + std::to_string(log.size()) +
                       " records, session expects at least " + std::to_string(session.verdict_log->records));
  }
  const std::span<const Verdict> recorded(log.data(), session.verdict_log->records);
  if (verdict_log_digest(recorded) != session.verdict_log->digest) {
    throw InvalidInput("verdict log " + log_path_.string() + " does not match the session digest");
  }

  const auto& src = session.config.source;
  state_.emplace(session.config, build_source(src, session.config.center, options_.threads), options_.threads);
  for (const auto& v : log) {
    try {
      state_->apply(v);
    } catch (const NotFound& e) {
      throw InvalidInput("verdict log replay failed at record " + std::to_string(v.seq) + ": " + e.what());
    }
  }
  if (src.type == SourceSpec::Type::manifest) pool_manifest_ = read_manifest(src.path);
  if (!session.config.training_manifest.empty()) {
    training_manifest_ = read_manifest(session.config.training_manifest);
    training_ = load_manifest_items(session.config.training_manifest, options_.threads);
    if (session.config.center) {
      for (auto& item : training_) subtract_mean(item);
    }
  }
  writer_.emplace(log_path_);
  persist_locked();
}

void ReviewService::persist_locked() { write_session(session_path_, state_->snapshot(log_file_)); }

void ReviewService::flush() {
  std::unique_lock lock(mutex_);
  persist_locked();
}

std::string ReviewService::snapshot_bytes() const {
  std::shared_lock lock(mutex_);
  return serialize_session(state_->snapshot(log_file_));
}

nlohmann::json ReviewService::session_json() const {
  std::shared_lock lock(mutex_);
  return {{"config", to_json(state_->config())}, {"estimates", state_->stats_json()}};
}

nlohmann::json ReviewService::stats_json() const {
  std::shared_lock lock(mutex_);
  return state_->stats_json();
}

nlohmann::json ReviewService::pairs_json(PairFilter filter, std::size_t limit) const {
  std::shared_lock lock(mutex_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& pair : state_->pairs(filter, limit)) {
    const auto* p = &pair;
    const auto label = state_->label_of(p->key);
    out.push_back({
        {"pair_key", p->key},
        {"id_a", p->id_a},
        {"id_b", p->id_b},
        {"distance", p->distance},
        {"trial_ids", p->trial_ids},
        {"image_a", "/img/" + p->id_a},
        {"image_b", "/img/" + p->id_b},
        {"label", label ? nlohmann::json(std::string(to_string(*label))) : nlohmann::json(nullptr)},
    });
  }
  return out;
}

nlohmann::json ReviewService::submit_verdict(std::string_view pair_key, std::string_view label, std::string note) {
  const auto parsed = parse_verdict_label(label);
  std::unique_lock lock(mutex_);
  const auto verdict = state_->make_verdict(pair_key, parsed, std::move(note), options_.clock());
  writer_->append(verdict);
  state_->apply(verdict);
  persist_locked();
  return state_->stats_json();
}

nlohmann::json ReviewService::neighbor_json(std::string_view item_id) const {
  std::shared_lock lock(mutex_);
  if (training_.empty()) throw NotFound("session has no training corpus");
  const auto items = state_->source().items();
  const auto it = std::find_if(items.begin(), items.end(), [&](const ItemVector& v) { return v.id == item_id; });
  if (it == items.end()) throw NotFound("unknown item '" + std::string(item_id) + "'");
  const auto nn = nearest_training_neighbor(*it, training_);
  return {{"item", std::string(item_id)},
          {"neighbor", nn.id},
          {"distance", nn.distance},
          {"image", "/img/" + nn.id + "?corpus=training"}};
}

std::string ReviewService::image_bmp(std::string_view item_id, bool training) const {
  const auto& manifest = training ? training_manifest_ : pool_manifest_;
  if (!manifest) throw NotFound("no manifest for the requested corpus");
  const fs::path manifest_path =
      training ? fs::path(state_->config().training_manifest) : fs::path(state_->config().source.path);
  const auto path = image_path_for(manifest_path, *manifest, item_id);
  if (path.empty()) throw NotFound("no image for item '" + std::string(item_id) + "'");
  return encode_bmp(read_pnm(path));
}

ArtifactRate ReviewService::artifact_rate() const {
  std::shared_lock lock(mutex_);
  return state_->artifact_rate();
}

}  // namespace bcensus
