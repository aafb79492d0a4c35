#include "crowdlens/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "crowdlens/analytics.hpp"
#include "crowdlens/api.hpp"
#include "crowdlens/config.hpp"
#include "crowdlens/connectors.hpp"
#include "crowdlens/keystore.hpp"
#include "crowdlens/sample_csv.hpp"
#include "crowdlens/scenario.hpp"
#include "crowdlens/service.hpp"

namespace crowdlens {
namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct UsageError : Error {
  using Error::Error;
};

std::filesystem::path config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return env;
  throw UsageError(std::string("no config: pass --config or set ") + kConfigEnvVar);
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err, spdlog::level::level_enum level,
                                            const std::optional<std::filesystem::path>& file) {
  std::vector<spdlog::sink_ptr> sinks{std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true)};
  if (file) sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(file->string()));
  auto logger = std::make_shared<spdlog::logger>("crowdlens", sinks.begin(), sinks.end());
  logger->set_level(level);
  logger->flush_on(spdlog::level::info);
  return logger;
}

std::optional<Timestamp> optional_time(const std::string& text, const char* name) {
  if (text.empty()) return std::nullopt;
  try {
    return Timestamp::parse(text);
  } catch (const ParseError& e) {
    throw UsageError(std::string("--") + name + ": " + e.what());
  }
}

std::unique_ptr<Store> build_store(const AppConfig& cfg) {
  auto store = std::make_unique<Store>(load_all_places(cfg), cfg.catalog());
  if (cfg.service.snapshot && std::filesystem::exists(*cfg.service.snapshot))
    store->load_snapshot(*cfg.service.snapshot);
  load_history(*store, cfg);
  return store;
}

std::string csv_value(const Value& v) { return v ? format_value(*v) : ""; }

struct Options {
  std::string config;
  // validate-config
  std::string validate_path;
  // ingest
  std::string source;
  std::string from, to;
  std::string snapshot;
  // replay
  double speed = 1.0;
  // gen-scenario
  std::string preset;
  std::uint64_t seed = 0;
  std::string out_dir;
  // query
  std::string metric;
  std::string region_file;
  std::string format = "json";
  std::string agg = "sum";
  // keys
  std::string auth_store;
  std::string label;
  std::string key_id;
  std::string keys_format = "csv";
};

int cmd_serve(const Options& o, std::ostream& err) {
  auto cfg = load_config(config_path(o.config));
  spdlog::set_default_logger(make_logger(err, spdlog::level::info, cfg.service.log_file));
  Service service(std::move(cfg));
  g_stop.store(false);
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  service.start();
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  spdlog::info("shutting down");
  service.stop();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  return 0;
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
  auto path = config_path(o.validate_path.empty() ? o.config : o.validate_path);
  try {
    auto cfg = load_config(path);
    std::size_t derived = 0;
    for (const auto& m : cfg.metric_defs) derived += m.is_derived() ? 1 : 0;
    out << "ok: " << cfg.sources.size() << " sources, " << cfg.metric_defs.size() << " metrics (" << derived
        << " derived)\n";
    out << "evaluation order:";
    for (const auto& id : cfg.evaluation_order) out << ' ' << id;
    out << '\n';
    for (const auto& src : cfg.sources) {
      out << "source " << src.name << " (" << to_string(src.kind) << ", " << src.driver << ")";
      for (const auto& [k, v] : redacted(src.params)) out << ' ' << k << '=' << v;
      out << '\n';
    }
    return 0;
  } catch (const Error& e) {
    err << "invalid: " << e.what() << '\n';
    return 1;
  }
}

int cmd_ingest(const Options& o, std::ostream& out) {
  auto cfg = load_config(config_path(o.config));
  const auto& src = cfg.source(o.source);
  if (src.kind != SourceKind::Historical) throw UsageError("source '" + o.source + "' is not historical");
  std::filesystem::path snapshot = o.snapshot;
  if (snapshot.empty()) {
    if (!cfg.service.snapshot) throw UsageError("no snapshot: pass --snapshot or set service.snapshot");
    snapshot = *cfg.service.snapshot;
  }
  Store store(load_all_places(cfg), cfg.catalog());
  if (std::filesystem::exists(snapshot)) store.load_snapshot(snapshot);
  Timestamp from = optional_time(o.from, "from").value_or(Timestamp::from_civil(1970, 1, 1));
  Timestamp to = optional_time(o.to, "to").value_or(Timestamp::from_civil(2100, 1, 1));
  if (from > to) throw UsageError("--from is after --to");
  auto samples = historical_load(src, {}, from, to);
  store.upsert(samples);
  store.save_snapshot(snapshot);
  auto stats = store.stats();
  out << "ingested " << samples.size() << " samples from '" << src.name << "'; snapshot holds "
      << stats.sample_count << " samples\n";
  return 0;
}

int cmd_replay(const Options& o, std::ostream& out) {
  auto cfg = load_config(config_path(o.config));
  SourceDescriptor src = cfg.source(o.source);
  if (src.kind != SourceKind::Realtime) throw UsageError("source '" + o.source + "' is not realtime");
  if (o.speed < 0) throw UsageError("--speed must be non-negative");
  src.params.insert_or_assign("speed", format_value(o.speed));
  auto stream = realtime_subscribe(src);
  g_stop.store(false);
  auto prev_int = std::signal(SIGINT, on_signal);
  std::stop_source stop;
  std::jthread watcher([&](std::stop_token st) {
    while (!st.stop_requested() && !g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    stop.request_stop();
  });
  out << kSampleCsvHeader << '\n';
  while (auto batch = stream->next(stop.get_token())) {
    write_sample_rows(out, batch->samples);
    out.flush();
  }
  watcher.request_stop();
  std::signal(SIGINT, prev_int);
  return 0;
}

int cmd_gen_scenario(const Options& o, std::ostream& out) {
  auto preset = parse_preset(o.preset);
  if (!preset) throw UsageError("unknown preset '" + o.preset + "'");
  auto scenario = generate_scenario(*preset, o.seed);
  for (const auto& p : write_scenario(scenario, o.out_dir)) out << p.string() << '\n';
  return 0;
}

int cmd_query(const std::string& what, const Options& o, std::ostream& out) {
  if (o.format != "json" && o.format != "csv") throw UsageError("--format must be json or csv");
  if (o.agg != "sum" && o.agg != "mean") throw UsageError("--agg must be sum or mean");
  auto cfg = load_config(config_path(o.config));
  auto store = build_store(cfg);
  if (!store->metrics().find(o.metric)) throw UnknownMetricError(o.metric);

  auto stats = store->stats();
  auto from = optional_time(o.from, "from");
  auto to = optional_time(o.to, "to");
  if (!stats.t_min && (!from || !to)) throw Error("the store holds no samples");
  Timestamp f = from.value_or(stats.t_min.value_or(Timestamp{}));
  Timestamp t = to.value_or(stats.t_max.value_or(Timestamp{}));
  if (f > t) throw UsageError("--from is after --to");

  std::optional<Region> region;
  if (!o.region_file.empty()) region = region_from_geojson(nlohmann::json::parse(read_file(o.region_file)));

  Series series = o.agg == "mean" ? mean_series(*store, o.metric, f, t, region)
                                  : sum_series(*store, o.metric, f, t, region);
  if (what == "peak") {
    Peak p = peak(series);
    if (o.format == "json")
      out << to_json(p, o.metric).dump() << '\n';
    else
      out << "metric_id,t,value\n" << o.metric << ',' << p.t.iso() << ',' << format_value(p.value) << '\n';
  } else {
    if (o.format == "json") {
      out << to_json(series).dump() << '\n';
    } else {
      out << "t,value\n";
      for (const auto& pt : series.points) out << pt.t.iso() << ',' << csv_value(pt.value) << '\n';
    }
  }
  return 0;
}

std::filesystem::path auth_store_path(const Options& o) {
  if (!o.auth_store.empty()) return o.auth_store;
  return load_config(config_path(o.config)).service.auth_store;
}

int cmd_keys(const std::string& action, const Options& o, std::ostream& out) {
  KeyStore keys(auth_store_path(o));
  if (action == "add") {
    auto issued = keys.add(o.label);
    out << issued.token() << '\n';
  } else if (action == "revoke") {
    keys.revoke(o.key_id);
    out << "revoked " << o.key_id << '\n';
  } else {
    if (o.keys_format == "json") {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : keys.list())
        arr.push_back({{"key_id", r.key_id}, {"label", r.label}, {"revoked", r.revoked},
                       {"created_at", r.created_at.iso()}});
      out << arr.dump() << '\n';
    } else {
      out << "key_id,label,revoked,created_at\n";
      for (const auto& r : keys.list())
        out << r.key_id << ',' << r.label << ',' << (r.revoked ? "true" : "false") << ',' << r.created_at.iso()
            << '\n';
    }
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  struct RestoreLogger {
    std::shared_ptr<spdlog::logger> previous = spdlog::default_logger();
    ~RestoreLogger() { spdlog::set_default_logger(previous); }
  } restore;
  spdlog::set_default_logger(make_logger(err, spdlog::level::warn, std::nullopt));

  CLI::App app{"crowdlens: geo-temporal crowding analytics", "crowdlens"};
  app.require_subcommand(1);
  Options o;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, std::string("Config file (default: $") + kConfigEnvVar + ")");
  };

  auto* serve = app.add_subcommand("serve", "Run the HTTP API and live ingest");
  add_config(serve);

  auto* validate = app.add_subcommand("validate-config", "Check a config file");
  validate->add_option("path", o.validate_path, "Config file");
  add_config(validate);

  auto* ingest = app.add_subcommand("ingest", "Load a historical source into the snapshot");
  add_config(ingest);
  ingest->add_option("--source", o.source, "Historical source name")->required();
  ingest->add_option("--from", o.from, "Start (ISO-8601 UTC)");
  ingest->add_option("--to", o.to, "End (ISO-8601 UTC)");
  ingest->add_option("--snapshot", o.snapshot, "Snapshot file (default: service.snapshot)");

  auto* replay = app.add_subcommand("replay", "Stream a realtime source to stdout as CSV");
  add_config(replay);
  replay->add_option("--source", o.source, "Realtime source name")->required();
  replay->add_option("--speed", o.speed, "Speed factor; 0 = as fast as possible");

  auto* gen = app.add_subcommand("gen-scenario", "Write a deterministic case-study dataset");
  gen->add_option("--preset", o.preset, "lisbon-festival | rir-weekend | melbourne-nye")->required();
  gen->add_option("--seed", o.seed, "Seed")->required();
  gen->add_option("--out", o.out_dir, "Output directory")->required();

  auto* query = app.add_subcommand("query", "Offline analytics over the configured data");
  query->require_subcommand(1);
  auto add_query = [&](const char* name, const char* desc) {
    auto* sub = query->add_subcommand(name, desc);
    add_config(sub);
    sub->add_option("--metric", o.metric, "Metric id")->required();
    sub->add_option("--from", o.from, "Start (ISO-8601 UTC; default: first sample)");
    sub->add_option("--to", o.to, "End (ISO-8601 UTC; default: last sample)");
    sub->add_option("--region-file", o.region_file, "GeoJSON Polygon");
    sub->add_option("--format", o.format, "json | csv");
    sub->add_option("--agg", o.agg, "sum | mean");
    return sub;
  };
  auto* q_peak = add_query("peak", "Instant of the highest total");
  auto* q_series = add_query("series", "Aggregate series");

  auto* keys = app.add_subcommand("keys", "Manage API keys");
  keys->require_subcommand(1);
  auto add_keys = [&](const char* name, const char* desc) {
    auto* sub = keys->add_subcommand(name, desc);
    add_config(sub);
    sub->add_option("--auth-store", o.auth_store, "Auth store file (default: service.auth_store)");
    return sub;
  };
  auto* k_add = add_keys("add", "Create a key; prints <key_id>.<secret> once");
  k_add->add_option("label", o.label, "Label")->required();
  auto* k_revoke = add_keys("revoke", "Revoke a key");
  k_revoke->add_option("key_id", o.key_id, "Key id")->required();
  auto* k_list = add_keys("list", "List keys (never secrets)");
  k_list->add_option("--format", o.keys_format, "csv | json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*serve) return cmd_serve(o, err);
    if (*validate) return cmd_validate(o, out, err);
    if (*ingest) return cmd_ingest(o, out);
    if (*replay) return cmd_replay(o, out);
    if (*gen) return cmd_gen_scenario(o, out);
    if (*q_peak) return cmd_query("peak", o, out);
    if (*q_series) return cmd_query("series", o, out);
    if (*k_add) return cmd_keys("add", o, out);
    if (*k_revoke) return cmd_keys("revoke", o, out);
    if (*k_list) return cmd_keys("list", o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace crowdlens
