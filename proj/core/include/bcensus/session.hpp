#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcensus/census.hpp"

namespace bcensus {

struct SourceSpec {
  enum class Type { uniform, head_uniform, distribution, manifest };
  Type type = Type::uniform;
  std::size_t n = 0;  // uniform
  double rho = 1.0;   // head_uniform
  std::size_t n_head = 0;
  std::size_t n_tail = 0;
  std::string path;  // distribution text file or pool manifest

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

// Loads the distribution or pool the spec names. `center` applies per-item
// mean subtraction to pool vectors.
SampleSource build_source(const SourceSpec& spec, bool center = false, unsigned threads = 0);

struct CensusConfig {
  SourceSpec source;
  bool center = false;
  std::size_t k = kDefaultFlaggedPairs;
  std::uint64_t trials_per_probe = kDefaultAutoTrials;
  double target = 0.5;
  std::uint64_t seed = 0;
  TrialMode mode;
  double rho = 1.0;
  std::size_t start_batch = 2;
  std::string training_manifest;  // optional corpus for memorization checks
};

struct ProbeRecord {
  std::size_t batch_size = 0;
  SearchPhase phase = SearchPhase::doubling;
  std::optional<CollisionEstimate> estimate;  // empty while every trial is pending
  std::uint64_t pending = 0;
  std::vector<Trial> trials;  // kept for human sessions only
};

struct VerdictLogRef {
  std::string file;  // relative to the session file
  std::uint64_t records = 0;
  std::string digest;
};

struct ArtifactTally {
  std::uint64_t artifacts = 0;
  std::uint64_t reviewed = 0;
};

inline constexpr std::string_view kSessionVersion = "bcensus-session/1";

struct CensusSession {
  CensusConfig config;
  std::vector<ProbeRecord> probes;
  std::optional<std::size_t> s_star;
  std::optional<double> support_estimate;  // s_star^2
  bool pool_limited = false;
  std::size_t largest_batch = 0;
  std::optional<SupportReport> report;
  std::optional<VerdictLogRef> verdict_log;
  std::optional<ArtifactTally> artifacts;
};

nlohmann::json to_json(const CensusConfig& config);
CensusConfig census_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CensusSession& session);
// Throws InvalidInput on any schema violation.
CensusSession session_from_json(const nlohmann::json& j);

// Stable byte form: sorted keys, two-space indent, trailing newline.
std::string serialize_session(const CensusSession& session);
CensusSession read_session(const std::filesystem::path& path);
// Atomic: temporary file, fsync, rename.
void write_session(const std::filesystem::path& path, const CensusSession& session);

// Runs the whole search for an automatic or synthetic session.
CensusSession run_auto_census(const CensusConfig& config, const SampleSource& source, unsigned threads = 0);

}  // namespace bcensus
