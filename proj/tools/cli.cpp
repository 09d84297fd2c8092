#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bcensus/bounds.hpp"
#include "bcensus/census.hpp"
#include "bcensus/distribution.hpp"
#include "bcensus/errors.hpp"
#include "bcensus/ingest.hpp"
#include "bcensus/review.hpp"
#include "bcensus/review_server.hpp"
#include "bcensus/session.hpp"
#include "bcensus/similarity.hpp"

namespace bcensus::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  unsigned threads = 0;
  bool pretty = false;
};

// Source selection shared by simulate and census.
struct SourceFlags {
  std::string dist;
  std::size_t uniform = 0;
  std::string head_uniform;
  std::string manifest;
};

SourceSpec parse_head_uniform(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) parts.push_back(part);
  if (parts.size() != 3) throw InvalidArgument("--head-uniform expects rho,n_head,n_tail");
  SourceSpec spec;
  spec.type = SourceSpec::Type::head_uniform;
  try {
    std::size_t used = 0;
    spec.rho = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
    spec.n_head = std::stoull(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
    spec.n_tail = std::stoull(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument(parts[2]);
  } catch (const std::logic_error&) {
    throw InvalidArgument("--head-uniform expects rho,n_head,n_tail; got '" + text + "'");
  }
  return spec;
}

SourceSpec source_spec(const SourceFlags& f) {
  const int given = (!f.dist.empty()) + (f.uniform > 0) + (!f.head_uniform.empty()) + (!f.manifest.empty());
  if (given != 1) throw InvalidArgument("exactly one source is required");
  SourceSpec spec;
  if (!f.dist.empty()) {
    spec.type = SourceSpec::Type::distribution;
    spec.path = f.dist;
  } else if (f.uniform > 0) {
    spec.type = SourceSpec::Type::uniform;
    spec.n = f.uniform;
  } else if (!f.head_uniform.empty()) {
    spec = parse_head_uniform(f.head_uniform);
  } else {
    spec.type = SourceSpec::Type::manifest;
    spec.path = f.manifest;
  }
  return spec;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read id list " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<ItemVector> select_items(std::vector<ItemVector> corpus, const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, std::size_t> by_id;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_id.emplace(corpus[i].id, i);
  std::vector<ItemVector> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw NotFound("item '" + id + "' is not in the manifest");
    out.push_back(corpus[it->second]);
  }
  return out;
}

void center_all(std::vector<ItemVector>& items) {
  for (auto& item : items) subtract_mean(item);
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(6) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, rows);
  } else if (j.is_array() && !j.empty() && j.front().is_object()) {
    rows.emplace_back(prefix, "[" + std::to_string(j.size()) + " rows]");
  } else {
    rows.emplace_back(prefix, scalar_text(j));
  }
}

void print_table(const json& rows, std::ostream& out) {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(row, "", flat);
    if (columns.empty()) {
      for (const auto& [k, v] : flat) columns.push_back(k);
    }
    std::map<std::string, std::string> by_key(flat.begin(), flat.end());
    std::vector<std::string> line;
    for (const auto& c : columns) line.push_back(by_key.count(c) ? by_key[c] : "");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    width[c] = columns[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << line[c] << (c + 1 < line.size() ? "  " : "\n");
    }
  };
  emit(columns);
  for (const auto& line : cells) emit(line);
}

// Human-readable rendering for --pretty: key/value lines, arrays of objects
// as aligned tables.
void print_pretty(const json& j, std::ostream& out) {
  if (j.is_array()) {
    if (j.empty()) {
      out << "(none)\n";
    } else {
      print_table(j, out);
    }
    return;
  }
  std::vector<std::pair<std::string, std::string>> rows;
  flatten(j, "", rows);
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  for (const auto& [k, v] : rows) out << std::left << std::setw(static_cast<int>(width)) << k << "  " << v << "\n";
  for (const auto& [k, v] : j.items()) {
    if (v.is_array() && !v.empty() && v.front().is_object()) {
      out << "\n" << k << ":\n";
      print_table(v, out);
    }
  }
}

void emit(const json& j, const Globals& g, std::ostream& out) {
  if (g.pretty) {
    print_pretty(j, out);
  } else {
    out << j.dump() << "\n";
  }
}

json estimate_or_null(const std::optional<CollisionEstimate>& e) { return e ? to_json(*e) : json(nullptr); }

int cmd_simulate(const SourceFlags& src, std::size_t batch, std::uint64_t trials, std::uint64_t seed, bool exact,
                 const Globals& g, std::ostream& out) {
  if (!src.manifest.empty()) throw InvalidArgument("simulate takes a synthetic source");
  if (batch == 0) throw InvalidArgument("--batch must be >= 1");
  if (trials == 0 && !exact) throw InvalidArgument("--trials must be >= 1 unless --exact is given");
  const auto source = build_source(source_spec(src), false, g.threads);
  const auto& dist = source.distribution();
  std::optional<double> exact_value;
  if (exact) exact_value = exact_collision_probability(dist, batch);
  std::optional<CollisionEstimate> estimate;
  if (trials > 0) estimate = monte_carlo_collision(dist, batch, trials, seed, g.threads);
  emit({{"batch", batch},
        {"support", dist.support_size()},
        {"beta", beta(dist)},
        {"seed", seed},
        {"estimate", estimate_or_null(estimate)},
        {"exact", exact_value ? json(*exact_value) : json(nullptr)}},
       g, out);
  return kExitOk;
}

int cmd_bounds(std::size_t batch, double gamma, double rho, const Globals& g, std::ostream& out) {
  if (batch < 2) throw InvalidArgument("--batch must be >= 2");
  emit(to_json(make_bounds_report(batch, gamma, rho)), g, out);
  return kExitOk;
}

int cmd_pairs(const std::string& manifest, const std::string& batch_file, std::size_t k, bool center,
              const Globals& g, std::ostream& out) {
  auto items = select_items(load_manifest_items(manifest, g.threads), read_id_list(batch_file));
  if (center) center_all(items);
  json rows = json::array();
  for (const auto& p : top_k_pairs(items, k, g.threads)) rows.push_back(to_json(p));
  emit(rows, g, out);
  return kExitOk;
}

// Active verdict per pair key from a verdict log.
std::vector<Verdict> active_from_log(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidInput("verdict log " + path.string() + " does not exist");
  std::map<std::string, Verdict> latest;
  for (auto& v : read_verdict_log(path)) latest[v.pair_key] = std::move(v);
  std::vector<Verdict> out;
  for (auto& [key, v] : latest) out.push_back(std::move(v));
  return out;
}

struct CensusFlags {
  SourceFlags source;
  std::string mode = "auto";
  std::optional<double> threshold;
  std::string calibrate_from;
  double target = 0.5;
  std::optional<std::uint64_t> trials;
  std::uint64_t seed = 0;
  std::string session;
  double rho = 1.0;
  std::size_t start = 2;
  std::size_t k = kDefaultFlaggedPairs;
  bool center = false;
  std::string training;
};

int cmd_census(const CensusFlags& f, const Globals& g, std::ostream& out) {
  CensusConfig config;
  config.source = source_spec(f.source);
  config.center = f.center;
  config.k = f.k;
  config.target = f.target;
  config.seed = f.seed;
  config.rho = f.rho;
  config.start_batch = f.start;
  config.training_manifest = f.training;
  const bool pool = config.source.type == SourceSpec::Type::manifest;
  if (f.mode == "human") {
    if (!pool) throw InvalidArgument("human mode needs --manifest");
    if (f.session.empty()) throw InvalidArgument("human mode needs --session");
    if (f.threshold || !f.calibrate_from.empty()) throw InvalidArgument("--threshold applies to auto mode only");
    config.mode = TrialMode::human();
    config.trials_per_probe = f.trials.value_or(kDefaultHumanTrials);
  } else if (f.mode == "auto") {
    double threshold = 0.0;
    if (pool) {
      if (f.threshold && !f.calibrate_from.empty()) {
        throw InvalidArgument("--threshold and --calibrate-from are mutually exclusive");
      }
      if (f.threshold) {
        threshold = *f.threshold;
      } else if (!f.calibrate_from.empty()) {
        const auto calibrated = calibrate_threshold(active_from_log(f.calibrate_from));
        if (!calibrated) throw NoEstimate("verdict log holds no duplicate verdicts to calibrate from");
        threshold = *calibrated;
      } else {
        throw InvalidArgument("auto mode on a pool needs --threshold or --calibrate-from");
      }
      if (!(threshold >= 0.0)) throw InvalidArgument("--threshold must be >= 0");
    }
    config.mode = TrialMode::automatic(threshold);
    config.trials_per_probe = f.trials.value_or(kDefaultAutoTrials);
  } else {
    throw InvalidArgument("--mode must be auto or human");
  }
  if (config.trials_per_probe == 0) throw InvalidArgument("--trials must be >= 1");

  if (config.mode.kind == TrialMode::Kind::human) {
    const auto session = create_human_session(f.session, config, g.threads);
    std::uint64_t pending = 0;
    for (const auto& p : session.probes) pending += p.pending;
    emit({{"session", f.session},
          {"verdict_log", session.verdict_log->file},
          {"batch_size", session.probes.empty() ? json(nullptr) : json(session.probes.back().batch_size)},
          {"trials", config.trials_per_probe},
          {"pending_trials", pending}},
         g, out);
    return kExitOk;
  }

  const auto source = build_source(config.source, config.center, g.threads);
  const auto session = run_auto_census(config, source, g.threads);
  if (!f.session.empty()) write_session(f.session, session);
  json trajectory = json::array();
  for (const auto& p : session.probes) {
    trajectory.push_back({{"batch_size", p.batch_size},
                          {"phase", std::string(to_string(p.phase))},
                          {"estimate", estimate_or_null(p.estimate)}});
  }
  emit({{"s_star", session.s_star ? json(*session.s_star) : json(nullptr)},
        {"support_estimate", session.support_estimate ? json(*session.support_estimate) : json(nullptr)},
        {"pool_limited", session.pool_limited},
        {"largest_batch", session.pool_limited ? json(session.largest_batch) : json(nullptr)},
        {"threshold", pool ? json(config.mode.threshold) : json(nullptr)},
        {"trajectory", std::move(trajectory)},
        {"report", session.report ? to_json(*session.report) : json(nullptr)}},
       g, out);
  return kExitOk;
}

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : text.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? text : text.substr(colon + 1);
  if (host.empty()) host = "127.0.0.1";
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::logic_error&) {
  }
  if (port < 0 || port > 65535) throw InvalidArgument("--listen expects host:port, got '" + text + "'");
  return {host, port};
}

int cmd_serve(const std::string& session, const std::string& listen, const std::string& ui_dir, const Globals& g,
              std::ostream& err) {
  const auto [host, port] = parse_listen(listen);
  ReviewService service(session, ReviewServiceOptions{g.threads, {}});
  ReviewServer server(service, ServerOptions{host, port, ui_dir});
  const int bound = server.bind();

  // Signals are collected by this thread; the server runs on another.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread worker([&] { server.run(); });
  err << "serving " << session << " on http://" << host << ":" << bound << "\n" << std::flush;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  worker.join();
  service.flush();
  err << "stopped; session flushed\n";
  return kExitOk;
}

int cmd_neighbors(const std::string& manifest, const std::string& training, const std::vector<std::string>& ids,
                  bool center, const Globals& g, std::ostream& out) {
  auto items = select_items(load_manifest_items(manifest, g.threads), ids);
  auto corpus = load_manifest_items(training, g.threads);
  if (center) {
    center_all(items);
    center_all(corpus);
  }
  json rows = json::array();
  for (const auto& item : items) {
    const auto nn = nearest_training_neighbor(item, corpus);
    rows.push_back({{"item", item.id}, {"neighbor", nn.id}, {"distance", nn.distance}});
  }
  emit(rows, g, out);
  return kExitOk;
}

void add_source_flags(CLI::App* app, SourceFlags& f, bool with_manifest) {
  auto* dist = app->add_option("--dist", f.dist, "Distribution text file, one probability per line");
  auto* uni = app->add_option("--uniform", f.uniform, "Uniform distribution over N atoms");
  auto* head = app->add_option("--head-uniform", f.head_uniform, "rho,n_head,n_tail mass-plus-uniform mixture");
  dist->excludes(uni)->excludes(head);
  uni->excludes(head);
  if (with_manifest) {
    auto* man = app->add_option("--manifest", f.manifest, "Pool manifest (images or embeddings)");
    man->excludes(dist)->excludes(uni)->excludes(head);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Birthday-paradox support census for generative models", "bcensus"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  const char* env_config = std::getenv("BCENSUS_CONFIG");
  app.set_config("--config", env_config ? env_config : "", "TOML/INI file supplying default flag values");

  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_flag("--pretty", g.pretty, "Human-readable tables instead of JSON");

  SourceFlags sim_src;
  std::size_t sim_batch = 0;
  std::uint64_t sim_trials = kDefaultAutoTrials;
  std::uint64_t sim_seed = 0;
  bool sim_exact = false;
  auto* simulate = app.add_subcommand("simulate", "Collision probability for a synthetic distribution");
  add_source_flags(simulate, sim_src, false);
  simulate->add_option("--batch", sim_batch, "Batch size M")->required();
  simulate->add_option("--trials", sim_trials, "Monte Carlo trials (0 with --exact skips sampling)");
  simulate->add_option("--seed", sim_seed, "Base seed");
  simulate->add_flag("--exact", sim_exact, "Also compute the exact probability");

  std::size_t b_batch = 0;
  double b_gamma = 0.0;
  double b_rho = 1.0;
  auto* bounds = app.add_subcommand("bounds", "Support bounds from an observed collision probability");
  bounds->add_option("--batch", b_batch, "Batch size M")->required();
  bounds->add_option("--gamma", b_gamma, "Observed collision probability")->required();
  bounds->add_option("--rho", b_rho, "Mass assumed on the head set");

  std::string p_manifest;
  std::string p_batch_file;
  std::size_t p_k = kDefaultFlaggedPairs;
  bool p_center = false;
  auto* pairs = app.add_subcommand("pairs", "Closest pairs inside one batch of pool items");
  pairs->add_option("--manifest", p_manifest, "Pool manifest")->required();
  pairs->add_option("--batch-file", p_batch_file, "File listing one item id per line")->required();
  pairs->add_option("--k", p_k, "Number of pairs to flag");
  pairs->add_flag("--center", p_center, "Subtract each vector's mean first");

  CensusFlags cf;
  auto* census = app.add_subcommand("census", "Search for the batch size with a 50% collision rate");
  add_source_flags(census, cf.source, true);
  census->add_option("--mode", cf.mode, "auto or human")->check(CLI::IsMember({"auto", "human"}));
  census->add_option("--threshold", cf.threshold, "Auto mode: duplicate distance threshold");
  census->add_option("--calibrate-from", cf.calibrate_from, "Auto mode: take the threshold from a verdict log");
  census->add_option("--target", cf.target, "Collision probability to reach");
  census->add_option("--trials", cf.trials, "Trials per probe (auto 10000, human 200)");
  census->add_option("--seed", cf.seed, "Base seed");
  census->add_option("--session", cf.session, "Session file to write");
  census->add_option("--rho", cf.rho, "Mass assumed on the head set for the report");
  census->add_option("--start", cf.start, "First batch size probed");
  census->add_option("--k", cf.k, "Pairs flagged per trial");
  census->add_flag("--center", cf.center, "Subtract each pool vector's mean first");
  census->add_option("--training", cf.training, "Training manifest for nearest-neighbor checks");

  std::string s_session;
  std::string s_listen = "127.0.0.1:8765";
  std::string s_ui;
  auto* serve = app.add_subcommand("serve", "Serve a human-mode session for review");
  serve->add_option("--session", s_session, "Session file")->required();
  serve->add_option("--listen", s_listen, "host:port");
  serve->add_option("--ui-dir", s_ui, "Directory with the built review UI");

  std::string n_manifest;
  std::string n_training;
  std::vector<std::string> n_items;
  bool n_center = false;
  auto* neighbors = app.add_subcommand("neighbors", "Nearest training items for pool items");
  neighbors->add_option("--manifest", n_manifest, "Pool manifest")->required();
  neighbors->add_option("--training", n_training, "Training manifest")->required();
  neighbors->add_option("--items", n_items, "Comma-separated item ids")->required()->delimiter(',');
  neighbors->add_flag("--center", n_center, "Subtract each vector's mean first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_src, sim_batch, sim_trials, sim_seed, sim_exact, g, out);
    if (*bounds) return cmd_bounds(b_batch, b_gamma, b_rho, g, out);
    if (*pairs) return cmd_pairs(p_manifest, p_batch_file, p_k, p_center, g, out);
    if (*census) return cmd_census(cf, g, out);
    if (*serve) return cmd_serve(s_session, s_listen, s_ui, g, err);
    if (*neighbors) return cmd_neighbors(n_manifest, n_training, n_items, n_center, g, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ResourceLimit& e) {
    err << "error: " << e.what() << "\n";
    return kExitResource;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace bcensus::cli
