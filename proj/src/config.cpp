#include "crowdlens/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "crowdlens/connectors.hpp"
#include "crowdlens/sample_csv.hpp"

namespace crowdlens {

using nlohmann::json;

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::Historical: return "historical";
    case SourceKind::Realtime: return "realtime";
    case SourceKind::Places: return "places";
  }
  return "unknown";
}

std::optional<SourceKind> parse_source_kind(std::string_view text) {
  if (text == "historical") return SourceKind::Historical;
  if (text == "realtime") return SourceKind::Realtime;
  if (text == "places") return SourceKind::Places;
  return std::nullopt;
}

bool is_secret_param(std::string_view key) {
  std::string k(key);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::string_view needle : {"password", "passwd", "secret", "token", "credential", "api_key", "apikey"})
    if (k.find(needle) != std::string::npos) return true;
  return false;
}

std::map<std::string, std::string, std::less<>> redacted(
    const std::map<std::string, std::string, std::less<>>& params) {
  auto out = params;
  for (auto& [k, v] : out)
    if (is_secret_param(k)) v = "***";
  return out;
}

const std::string& SourceDescriptor::param(std::string_view key) const {
  auto it = params.find(key);
  if (it == params.end())
    throw ConfigError("source '" + name + "': missing required param '" + std::string(key) + "'");
  return it->second;
}

std::optional<std::string> SourceDescriptor::optional_param(std::string_view key) const {
  auto it = params.find(key);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

double SourceDescriptor::number_param(std::string_view key, std::optional<double> fallback) const {
  auto it = params.find(key);
  if (it == params.end()) {
    if (fallback) return *fallback;
    param(key);  // throws
  }
  const std::string& s = it->second;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError("source '" + name + "': param '" + std::string(key) + "' is not a number");
  return v;
}

std::filesystem::path SourceDescriptor::path_param(std::string_view key) const {
  std::filesystem::path p = param(key);
  return p.is_absolute() ? p : base_dir / p;
}

Duration SourceDescriptor::effective_staleness() const {
  if (staleness) return *staleness;
  if (params.contains("cadence_s"))
    return Duration(2 * static_cast<std::int64_t>(number_param("cadence_s")));
  return kDefaultStaleness;
}

const SourceDescriptor& AppConfig::source(std::string_view name) const {
  for (const auto& s : sources)
    if (s.name == name) return s;
  throw ConfigError("no source named '" + std::string(name) + "'");
}

Duration AppConfig::staleness_for(std::string_view metric_id) const {
  MetricCatalog cat = catalog();
  std::size_t m = cat.index_of(metric_id);
  std::optional<Duration> best;
  for (std::size_t b : cat.base_dependencies(m)) {
    const auto& base_id = cat.def(b).id;
    for (const auto& s : sources) {
      if (std::find(s.metrics.begin(), s.metrics.end(), base_id) == s.metrics.end()) continue;
      Duration d = s.effective_staleness();
      if (!best || d > *best) best = d;
    }
  }
  return best.value_or(kDefaultStaleness);
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw ConfigError(where + ": " + msg);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, _] : obj.items()) {
    if (k.starts_with("_")) continue;  // comments
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(where, "unknown key '" + k + "'");
  }
}

std::string as_string(const json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) return format_value(j.get<double>());
  if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
  fail(where, "expected a string, number or boolean");
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string()) fail(where + "." + key, "required string");
  return obj[key].get<std::string>();
}

std::pair<std::string, int> parse_bind(const std::string& bind, const std::string& where) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) fail(where, "bind must be host:port");
  int port = 0;
  auto ps = std::string_view(bind).substr(colon + 1);
  auto res = std::from_chars(ps.data(), ps.data() + ps.size(), port);
  if (res.ec != std::errc() || res.ptr != ps.data() + ps.size() || port < 0 || port > 65535)
    fail(where, "invalid port in '" + bind + "'");
  return {bind.substr(0, colon), port};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("config", "top level must be an object");
  check_keys(doc, "config", {"service", "metrics", "sources"});

  AppConfig cfg;
  cfg.base_dir = base_dir;

  if (doc.contains("service")) {
    const auto& s = doc["service"];
    if (!s.is_object()) fail("service", "must be an object");
    check_keys(s, "service", {"bind", "auth_store", "snapshot", "log_file", "heartbeat_ms", "subscriber_buffer"});
    if (s.contains("bind")) {
      auto [host, port] = parse_bind(require_string(s, "bind", "service"), "service.bind");
      cfg.service.host = host;
      cfg.service.port = port;
    }
    if (s.contains("auth_store")) cfg.service.auth_store = resolve(base_dir, require_string(s, "auth_store", "service"));
    if (s.contains("snapshot")) cfg.service.snapshot = resolve(base_dir, require_string(s, "snapshot", "service"));
    if (s.contains("log_file")) cfg.service.log_file = resolve(base_dir, require_string(s, "log_file", "service"));
    if (s.contains("heartbeat_ms")) {
      if (!s["heartbeat_ms"].is_number_integer() || s["heartbeat_ms"].get<long long>() <= 0)
        fail("service.heartbeat_ms", "must be a positive integer");
      cfg.service.heartbeat = std::chrono::milliseconds(s["heartbeat_ms"].get<long long>());
    }
    if (s.contains("subscriber_buffer")) {
      if (!s["subscriber_buffer"].is_number_integer() || s["subscriber_buffer"].get<long long>() <= 0)
        fail("service.subscriber_buffer", "must be a positive integer");
      cfg.service.subscriber_buffer = s["subscriber_buffer"].get<std::size_t>();
    }
  }
  if (!doc.contains("service") || !doc["service"].contains("auth_store"))
    cfg.service.auth_store = resolve(base_dir, "keys.db");

  if (!doc.contains("metrics") || !doc["metrics"].is_array() || doc["metrics"].empty())
    fail("metrics", "at least one metric is required");
  for (std::size_t i = 0; i < doc["metrics"].size(); ++i) {
    const auto& m = doc["metrics"][i];
    std::string where = "metrics[" + std::to_string(i) + "]";
    if (!m.is_object()) fail(where, "must be an object");
    check_keys(m, where, {"id", "label", "unit", "cap", "expression"});
    MetricDef def;
    def.id = require_string(m, "id", where);
    def.label = m.contains("label") ? require_string(m, "label", where) : def.id;
    def.unit = m.contains("unit") ? require_string(m, "unit", where) : "";
    if (!m.contains("cap") || !m["cap"].is_number()) fail(where + ".cap", "required number");
    def.cap = m["cap"].get<double>();
    if (m.contains("expression")) {
      def.expression = require_string(m, "expression", where);
      try {
        parse_expression(*def.expression);
      } catch (const ParseError& e) {
        fail(where + ".expression", e.what());
      }
    }
    cfg.metric_defs.push_back(std::move(def));
  }
  MetricCatalog catalog;
  try {
    catalog = MetricCatalog(cfg.metric_defs);
  } catch (const Error& e) {
    fail("metrics", e.what());
  }
  cfg.evaluation_order = catalog.evaluation_order();

  if (!doc.contains("sources") || !doc["sources"].is_array()) fail("sources", "required array");
  std::set<std::string> names;
  bool has_places = false;
  const auto& registry = DriverRegistry::global();
  for (std::size_t i = 0; i < doc["sources"].size(); ++i) {
    const auto& s = doc["sources"][i];
    std::string where = "sources[" + std::to_string(i) + "]";
    if (!s.is_object()) fail(where, "must be an object");
    check_keys(s, where, {"name", "kind", "driver", "params", "metrics", "staleness_s"});
    SourceDescriptor src;
    src.base_dir = base_dir;
    src.name = require_string(s, "name", where);
    if (!names.insert(src.name).second) fail(where + ".name", "duplicate source name '" + src.name + "'");
    auto kind = parse_source_kind(require_string(s, "kind", where));
    if (!kind) fail(where + ".kind", "must be historical, realtime or places");
    src.kind = *kind;
    src.driver = require_string(s, "driver", where);
    if (s.contains("params")) {
      if (!s["params"].is_object()) fail(where + ".params", "must be an object");
      for (const auto& [k, v] : s["params"].items()) src.params[k] = as_string(v, where + ".params." + k);
    }
    if (s.contains("metrics")) {
      if (!s["metrics"].is_array()) fail(where + ".metrics", "must be an array");
      for (const auto& m : s["metrics"]) {
        if (!m.is_string()) fail(where + ".metrics", "metric ids must be strings");
        auto id = m.get<std::string>();
        auto idx = catalog.find(id);
        if (!idx) fail(where + ".metrics", "metric '" + id + "' is not declared");
        if (catalog.def(*idx).is_derived())
          fail(where + ".metrics", "metric '" + id + "' is derived; sources supply base metrics");
        src.metrics.push_back(id);
      }
    }
    if (s.contains("staleness_s")) {
      if (!s["staleness_s"].is_number() || s["staleness_s"].get<double>() <= 0)
        fail(where + ".staleness_s", "must be a positive number");
      src.staleness = Duration(static_cast<std::int64_t>(s["staleness_s"].get<double>()));
    }

    const DriverInfo* driver = registry.find(src.driver);
    if (!driver) fail(where + ".driver", "unknown driver '" + src.driver + "'");
    if (!driver->supports(src.kind))
      fail(where + ".driver", "driver '" + src.driver + "' does not serve " + std::string(to_string(src.kind)) + " sources");
    auto req = driver->required_params.find(src.kind);
    if (req != driver->required_params.end())
      for (const auto& p : req->second)
        if (!src.params.contains(p)) fail(where + ".params", "missing required param '" + p + "'");
    if (src.params.contains("cadence_s")) {
      double cadence = 0.0;
      try {
        cadence = src.number_param("cadence_s");
      } catch (const ConfigError&) {
        fail(where + ".params.cadence_s", "must be a number");
      }
      if (cadence < 1.0) fail(where + ".params.cadence_s", "must be at least 1 second");
    }
    if (src.kind == SourceKind::Places) {
      has_places = true;
      if (!src.metrics.empty()) fail(where + ".metrics", "places sources supply no metrics");
    } else if (src.metrics.empty()) {
      fail(where + ".metrics", "at least one metric is required");
    }
    cfg.sources.push_back(std::move(src));
  }
  if (!has_places) fail("sources", "at least one places source is required");
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  auto base = std::filesystem::absolute(path).parent_path();
  try {
    return parse_config(text, base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace crowdlens
