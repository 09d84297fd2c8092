#include "bcensus/session.hpp"

#include <fstream>

#include "bcensus/errors.hpp"
#include "bcensus/ingest.hpp"

namespace bcensus {

namespace {

std::string_view to_string(SourceSpec::Type t) {
  switch (t) {
    case SourceSpec::Type::uniform: return "uniform";
    case SourceSpec::Type::head_uniform: return "head_uniform";
    case SourceSpec::Type::distribution: return "distribution";
    case SourceSpec::Type::manifest: return "manifest";
  }
  return "uniform";
}

SourceSpec::Type parse_source_type(std::string_view text) {
  if (text == "uniform") return SourceSpec::Type::uniform;
  if (text == "head_uniform") return SourceSpec::Type::head_uniform;
  if (text == "distribution") return SourceSpec::Type::distribution;
  if (text == "manifest") return SourceSpec::Type::manifest;
  throw InvalidInput("unknown source type '" + std::string(text) + "'");
}

nlohmann::json to_json(const SourceSpec& s) {
  nlohmann::json j = {{"type", std::string(to_string(s.type))}};
  switch (s.type) {
    case SourceSpec::Type::uniform: j["n"] = s.n; break;
    case SourceSpec::Type::head_uniform:
      j["rho"] = s.rho;
      j["n_head"] = s.n_head;
      j["n_tail"] = s.n_tail;
      break;
    case SourceSpec::Type::distribution:
    case SourceSpec::Type::manifest: j["path"] = s.path; break;
  }
  return j;
}

SourceSpec source_spec_from_json(const nlohmann::json& j) {
  SourceSpec s;
  s.type = parse_source_type(j.at("type").get<std::string>());
  switch (s.type) {
    case SourceSpec::Type::uniform: s.n = j.at("n").get<std::size_t>(); break;
    case SourceSpec::Type::head_uniform:
      s.rho = j.at("rho").get<double>();
      s.n_head = j.at("n_head").get<std::size_t>();
      s.n_tail = j.at("n_tail").get<std::size_t>();
      break;
    case SourceSpec::Type::distribution:
    case SourceSpec::Type::manifest: s.path = j.at("path").get<std::string>(); break;
  }
  return s;
}

nlohmann::json to_json(const Trial& t) {
  nlohmann::json flagged = nlohmann::json::array();
  for (const auto& p : t.flagged) flagged.push_back(to_json(p));
  return {{"trial_id", t.trial_id},
          {"batch_size", t.batch_size},
          {"resolution", std::string(to_string(t.resolution))},
          {"flagged", std::move(flagged)}};
}

Trial trial_from_json(const nlohmann::json& j, const TrialMode& mode) {
  Trial t;
  t.trial_id = j.at("trial_id").get<std::uint64_t>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.resolution = parse_resolution(j.at("resolution").get<std::string>());
  for (const auto& p : j.at("flagged")) t.flagged.push_back(pair_candidate_from_json(p));
  t.mode = mode;
  return t;
}

template <typename T>
nlohmann::json nullable(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

SampleSource build_source(const SourceSpec& spec, bool center, unsigned threads) {
  switch (spec.type) {
    case SourceSpec::Type::uniform: return SampleSource::synthetic(make_uniform(spec.n));
    case SourceSpec::Type::head_uniform:
      return SampleSource::synthetic(make_mass_plus_uniform(spec.rho, spec.n_head, spec.n_tail));
    case SourceSpec::Type::distribution: {
      std::ifstream in(spec.path);
      if (!in) throw InvalidInput("cannot open distribution file " + spec.path);
      return SampleSource::synthetic(parse_distribution_text(in));
    }
    case SourceSpec::Type::manifest: {
      auto items = load_manifest_items(spec.path, threads);
      if (center) {
        for (auto& item : items) subtract_mean(item);
      }
      return SampleSource::pool(std::move(items), threads);
    }
  }
  throw InvalidArgument("unknown source type");
}

nlohmann::json to_json(const CensusConfig& c) {
  nlohmann::json j = {
      {"source", to_json(c.source)},
      {"center", c.center},
      {"k", c.k},
      {"trials_per_probe", c.trials_per_probe},
      {"target", c.target},
      {"seed", c.seed},
      {"mode", c.mode.kind == TrialMode::Kind::automatic ? "auto" : "human"},
      {"rho", c.rho},
      {"start_batch", c.start_batch},
      {"training_manifest", c.training_manifest},
  };
  j["threshold"] = c.mode.kind == TrialMode::Kind::automatic ? nlohmann::json(c.mode.threshold) : nlohmann::json(nullptr);
  return j;
}

CensusConfig census_config_from_json(const nlohmann::json& j) {
  CensusConfig c;
  c.source = source_spec_from_json(j.at("source"));
  c.center = j.at("center").get<bool>();
  c.k = j.at("k").get<std::size_t>();
  c.trials_per_probe = j.at("trials_per_probe").get<std::uint64_t>();
  c.target = j.at("target").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "auto") {
    c.mode = TrialMode::automatic(j.at("threshold").get<double>());
  } else if (mode == "human") {
    c.mode = TrialMode::human();
  } else {
    throw InvalidInput("unknown census mode '" + mode + "'");
  }
  c.rho = j.at("rho").get<double>();
  c.start_batch = j.at("start_batch").get<std::size_t>();
  c.training_manifest = j.at("training_manifest").get<std::string>();
  return c;
}

nlohmann::json to_json(const CensusSession& s) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : s.probes) {
    nlohmann::json jp = {
        {"batch_size", p.batch_size},
        {"phase", std::string(to_string(p.phase))},
        {"estimate", p.estimate ? to_json(*p.estimate) : nlohmann::json(nullptr)},
        {"pending", p.pending},
    };
    if (s.config.mode.kind == TrialMode::Kind::human) {
      nlohmann::json trials = nlohmann::json::array();
      for (const auto& t : p.trials) trials.push_back(to_json(t));
      jp["trials"] = std::move(trials);
    }
    probes.push_back(std::move(jp));
  }
  nlohmann::json j = {
      {"version", std::string(kSessionVersion)},
      {"config", to_json(s.config)},
      {"probes", std::move(probes)},
      {"s_star", nullable(s.s_star)},
      {"support_estimate", nullable(s.support_estimate)},
      {"pool_limited", s.pool_limited},
      {"largest_batch", s.largest_batch},
      {"report", s.report ? to_json(*s.report) : nlohmann::json(nullptr)},
  };
  j["verdict_log"] = s.verdict_log ? nlohmann::json{{"file", s.verdict_log->file},
                                                    {"records", s.verdict_log->records},
                                                    {"digest", s.verdict_log->digest}}
                                   : nlohmann::json(nullptr);
  j["artifacts"] = s.artifacts
                       ? nlohmann::json{{"artifacts", s.artifacts->artifacts}, {"reviewed", s.artifacts->reviewed}}
                       : nlohmann::json(nullptr);
  return j;
}

CensusSession session_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != kSessionVersion) {
      throw InvalidInput("unsupported session version '" + j.at("version").get<std::string>() + "'");
    }
    CensusSession s;
    s.config = census_config_from_json(j.at("config"));
    for (const auto& jp : j.at("probes")) {
      ProbeRecord p;
      p.batch_size = jp.at("batch_size").get<std::size_t>();
      p.phase = parse_search_phase(jp.at("phase").get<std::string>());
      if (!jp.at("estimate").is_null()) p.estimate = collision_estimate_from_json(jp.at("estimate"));
      p.pending = jp.at("pending").get<std::uint64_t>();
      if (jp.contains("trials")) {
        for (const auto& jt : jp.at("trials")) p.trials.push_back(trial_from_json(jt, s.config.mode));
      }
      s.probes.push_back(std::move(p));
    }
    if (!j.at("s_star").is_null()) s.s_star = j.at("s_star").get<std::size_t>();
    if (!j.at("support_estimate").is_null()) s.support_estimate = j.at("support_estimate").get<double>();
    s.pool_limited = j.at("pool_limited").get<bool>();
    s.largest_batch = j.at("largest_batch").get<std::size_t>();
    if (!j.at("report").is_null()) s.report = support_report_from_json(j.at("report"));
    if (!j.at("verdict_log").is_null()) {
      const auto& v = j.at("verdict_log");
      s.verdict_log = VerdictLogRef{v.at("file").get<std::string>(), v.at("records").get<std::uint64_t>(),
                                    v.at("digest").get<std::string>()};
    }
    if (!j.at("artifacts").is_null()) {
      const auto& a = j.at("artifacts");
      s.artifacts = ArtifactTally{a.at("artifacts").get<std::uint64_t>(), a.at("reviewed").get<std::uint64_t>()};
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed session: ") + e.what());
  }
}

std::string serialize_session(const CensusSession& session) { return to_json(session).dump(2) + "\n"; }

CensusSession read_session(const std::filesystem::path& path) {
  const auto text = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return session_from_json(j);
}

void write_session(const std::filesystem::path& path, const CensusSession& session) {
  write_file_atomic(path, serialize_session(session));
}

CensusSession run_auto_census(const CensusConfig& config, const SampleSource& source, unsigned threads) {
  if (config.mode.kind == TrialMode::Kind::human && !source.is_synthetic()) {
    throw InvalidArgument("human-mode pool sessions are driven by the review service");
  }
  SearchConfig search;
  search.target = config.target;
  search.trials_per_probe = config.trials_per_probe;
  search.mode = config.mode;
  search.seed = config.seed;
  search.k = config.k;
  search.start_batch = config.start_batch;
  search.threads = threads;
  const auto result = find_half_collision_batch(source, search);

  CensusSession session;
  session.config = config;
  for (const auto& point : result.trajectory) {
    session.probes.push_back({point.batch_size, point.phase, point.estimate, point.pending, {}});
  }
  session.s_star = result.s_star;
  session.pool_limited = result.pool_limited;
  session.largest_batch = result.largest_batch;
  if (result.s_star) {
    const double s = static_cast<double>(*result.s_star);
    session.support_estimate = s * s;
    session.report = support_report(*result.s_star, config.target, config.rho);
  }
  return session;
}

}  // namespace bcensus
