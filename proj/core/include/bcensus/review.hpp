#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcensus/census.hpp"
#include "bcensus/ingest.hpp"
#include "bcensus/session.hpp"

namespace bcensus {

enum class VerdictLabel { duplicate, distinct, artifact };

std::string_view to_string(VerdictLabel label) noexcept;
// Throws InvalidArgument for anything but duplicate / distinct / artifact.
VerdictLabel parse_verdict_label(std::string_view text);

// Content address of an unordered id pair: FNV-1a 64 of "min\0max" in hex.
// The same image pair surfacing in several trials maps to one key.
std::string make_pair_key(std::string_view id_a, std::string_view id_b);

struct Verdict {
  std::uint64_t seq = 0;
  std::string pair_key;
  std::string id_a;
  std::string id_b;
  double distance = 0.0;
  VerdictLabel label = VerdictLabel::distinct;
  std::string note;
  std::int64_t timestamp = 0;  // UTC seconds

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

// One compact JSON object per line, newline-terminated.
std::string verdict_log_line(const Verdict& v);
// Complete lines only; an unterminated final line (torn append) is dropped.
std::vector<Verdict> parse_verdict_log(std::string_view text);
// Missing file reads as an empty log.
std::vector<Verdict> read_verdict_log(const std::filesystem::path& path);
// Truncates a torn final line so later appends start on a record boundary.
void repair_verdict_log(const std::filesystem::path& path);
std::string verdict_log_digest(std::span<const Verdict> records);

// Append-only writer; append() returns only after the record is on disk.
class VerdictLogWriter {
 public:
  explicit VerdictLogWriter(std::filesystem::path path);
  ~VerdictLogWriter();
  VerdictLogWriter(const VerdictLogWriter&) = delete;
  VerdictLogWriter& operator=(const VerdictLogWriter&) = delete;

  void append(const Verdict& v);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct ArtifactRate {
  std::uint64_t artifacts = 0;  // distinct ids under an active artifact verdict
  std::uint64_t reviewed = 0;   // distinct ids under any active verdict
  double rate = 0.0;
};

// Throws NoEstimate when nothing has been reviewed.
ArtifactRate artifact_rate(std::span<const Verdict> active);

// Largest distance among pairs confirmed as duplicates, if any.
std::optional<double> calibrate_threshold(std::span<const Verdict> active);

struct PairInfo {
  std::string key;
  std::string id_a;
  std::string id_b;
  double distance = 0.0;
  std::vector<std::uint64_t> trial_ids;
};

enum class PairFilter { pending, resolved, all };

PairFilter parse_pair_filter(std::string_view text);

// Human-mode census state. Everything derived (trial resolutions, probe
// estimates, search position) is a pure function of the configuration and
// the active verdict per pair, so incremental application and full replay
// agree exactly. A superseding verdict that changes an earlier probe's
// outcome discards the probes generated after it.
class ReviewState {
 public:
  ReviewState(CensusConfig config, SampleSource source, unsigned threads = 0);

  const CensusConfig& config() const noexcept { return config_; }
  const SampleSource& source() const noexcept { return source_; }

  const PairInfo* find_pair(std::string_view key) const;
  // Fills ids and distance from the pair index; throws NotFound.
  Verdict make_verdict(std::string_view key, VerdictLabel label, std::string note, std::int64_t timestamp) const;
  // Throws NotFound when the pair is not part of the current session.
  void apply(const Verdict& v);

  const std::vector<Verdict>& history() const noexcept { return history_; }
  std::vector<Verdict> active_verdicts() const;
  std::optional<VerdictLabel> label_of(std::string_view key) const;
  ArtifactRate artifact_rate() const;

  // pending: unjudged pairs of still-pending trials in the current probe, in
  // (trial, rank) order. resolved / all: ordered by key.
  std::vector<PairInfo> pairs(PairFilter filter, std::size_t limit) const;

  bool finished() const noexcept { return finished_; }
  std::optional<std::size_t> s_star() const noexcept { return s_star_; }

  CensusSession snapshot(const std::string& log_file) const;
  nlohmann::json stats_json() const;

 private:
  struct ProbeState {
    ProbeRecord record;
    std::vector<std::vector<std::string>> keys;  // per trial, per flagged pair
  };

  ProbeState generate_probe(std::size_t index, std::size_t batch_size, SearchPhase phase) const;
  void rebuild();

  CensusConfig config_;
  SampleSource source_;
  unsigned threads_;
  std::vector<ProbeState> probes_;
  std::map<std::string, PairInfo, std::less<>> index_;
  std::unordered_map<std::string, std::size_t> active_;  // key -> position in history_
  std::vector<Verdict> history_;
  bool finished_ = false;
  bool pool_limited_ = false;
  std::optional<std::size_t> s_star_;
};

// Creates a human-mode session file and an empty verdict log next to it.
CensusSession create_human_session(const std::filesystem::path& session_path, const CensusConfig& config,
                                   unsigned threads = 0);

struct ReviewServiceOptions {
  unsigned threads = 0;
  std::function<std::int64_t()> clock;  // UTC seconds; system clock when empty
};

// File-backed review loop shared by the HTTP server and tests. Verdicts are
// serialized; reads may run concurrently.
class ReviewService {
 public:
  // Throws InvalidInput when the session is corrupt, not human-mode, or its
  // verdict log does not match the recorded digest.
  explicit ReviewService(std::filesystem::path session_path, ReviewServiceOptions options = {});

  nlohmann::json session_json() const;
  nlohmann::json stats_json() const;
  nlohmann::json pairs_json(PairFilter filter, std::size_t limit) const;
  // Appends to the log, applies, persists the session, then returns stats.
  // Throws NotFound for unknown keys and InvalidArgument for bad labels.
  nlohmann::json submit_verdict(std::string_view pair_key, std::string_view label, std::string note);
  // Nearest training-corpus item; throws NotFound.
  nlohmann::json neighbor_json(std::string_view item_id) const;
  // BMP bytes for a pool (or training) item; throws NotFound.
  std::string image_bmp(std::string_view item_id, bool training) const;

  ArtifactRate artifact_rate() const;
  std::string snapshot_bytes() const;
  void flush();

 private:
  void persist_locked();

  std::filesystem::path session_path_;
  std::filesystem::path log_path_;
  std::string log_file_;
  ReviewServiceOptions options_;
  std::optional<ReviewState> state_;
  std::optional<VerdictLogWriter> writer_;
  std::vector<ItemVector> training_;
  std::optional<Manifest> pool_manifest_;
  std::optional<Manifest> training_manifest_;
  mutable std::shared_mutex mutex_;
};

}  // namespace bcensus
