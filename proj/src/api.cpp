#include "crowdlens/api.hpp"

#include <charconv>

#include "crowdlens/config.hpp"

namespace crowdlens {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxFrames = 5000;

struct RequestError {
  int status;
  std::string code;
  std::string message;
};

json value_json(const Value& v) { return v ? json(*v) : json(nullptr); }

const std::string* query_param(const ApiRequest& r, std::string_view key) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return nullptr;
  return &it->second;
}

std::string require_metric(const Store& store, const std::string& id) {
  if (!store.metrics().find(id)) throw RequestError{400, "unknown_metric", "unknown metric '" + id + "'"};
  return id;
}

std::string metric_param(const Store& store, const ApiRequest& r) {
  const auto* m = query_param(r, "metric");
  if (!m) throw RequestError{400, "missing_param", "parameter 'metric' is required"};
  return require_metric(store, *m);
}

Timestamp time_param(const std::string& key, const std::string& text) {
  try {
    return Timestamp::parse(text);
  } catch (const ParseError& e) {
    throw RequestError{400, "bad_timestamp", "parameter '" + key + "': " + e.what()};
  }
}

/// from/to default to the stored extent.
std::pair<Timestamp, Timestamp> range_params(const Store& store, const ApiRequest& r) {
  const auto* f = query_param(r, "from");
  const auto* t = query_param(r, "to");
  std::optional<StoreStats> stats;
  auto extent = [&]() -> const StoreStats& {
    if (!stats) stats = store.stats();
    if (!stats->t_min) throw RequestError{404, "no_data", "the store holds no samples"};
    return *stats;
  };
  Timestamp from = f ? time_param("from", *f) : *extent().t_min;
  Timestamp to = t ? time_param("to", *t) : *extent().t_max;
  if (from > to) throw RequestError{400, "bad_range", "'from' is after 'to'"};
  return {from, to};
}

std::optional<Region> region_param(const ApiRequest& r) {
  const auto* text = query_param(r, "region");
  if (!text) return std::nullopt;
  try {
    return region_from_json_rings(*text);
  } catch (const Error& e) {
    throw RequestError{400, "bad_region", e.what()};
  }
}

std::int64_t positive_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || v <= 0)
    throw RequestError{400, "bad_param", "parameter '" + key + "' must be a positive integer"};
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    if (end > pos) out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

ApiResponse ok(const json& body) { return {200, "application/json", body.dump(), std::nullopt}; }

}  // namespace

json to_json(const Frame& frame) {
  json values = json::array();
  for (const auto& e : frame.values) values.push_back({{"place_id", e.place_id}, {"value", value_json(e.value)}});
  return {{"t", frame.t.iso()}, {"metric_id", frame.metric_id}, {"values", std::move(values)}};
}

json to_json(const Series& series) {
  json points = json::array();
  for (const auto& p : series.points) points.push_back({{"t", p.t.iso()}, {"value", value_json(p.value)}});
  return {{"metric_id", series.metric_id}, {"points", std::move(points)}};
}

json to_json(const Peak& peak, std::string_view metric_id) {
  return {{"metric_id", metric_id}, {"t", peak.t.iso()}, {"value", peak.value}};
}

json to_json(const MetricDef& def) {
  json j = {{"id", def.id},
            {"label", def.label},
            {"unit", def.unit},
            {"cap", def.cap},
            {"derived", def.is_derived()}};
  j["expression"] = def.expression ? json(*def.expression) : json(nullptr);
  return j;
}

json timeline_json(const Series& sums, std::span<const HueStop> stops) {
  json arr = json::array();
  for (const auto& s : stops)
    arr.push_back({{"t", s.t.iso()}, {"sum", s.sum}, {"hue", s.hue}, {"color", hex_color(hsl_to_rgb(s.hue))}});
  return {{"metric_id", sums.metric_id}, {"stops", std::move(arr)}};
}

Api::Api(const Store& store, const KeyStore& keys, StalenessFn staleness)
    : store_(store), keys_(keys), staleness_(std::move(staleness)) {}

Duration Api::staleness_for(std::string_view metric_id) const {
  return staleness_ ? staleness_(metric_id) : kDefaultStaleness;
}

std::optional<std::string> Api::authenticate(const std::optional<std::string>& token) const {
  if (!token || token->empty()) return std::nullopt;
  return keys_.authenticate(*token);
}

ApiResponse Api::unauthorized() { return error(401, "unauthorized", "missing or invalid API key"); }

ApiResponse Api::error(int status, std::string_view code, std::string_view message) {
  return {status, "application/json", json{{"error", code}, {"message", message}}.dump(), std::nullopt};
}

ApiResponse Api::handle(const ApiRequest& request) const {
  auto key_id = authenticate(request.api_key);
  if (!key_id) return unauthorized();

  ApiResponse resp;
  try {
    if (request.method != "GET") {
      resp = error(405, "method_not_allowed", "only GET is supported");
    } else if (request.path == "/api/places") {
      resp = places();
    } else if (request.path == "/api/metrics") {
      resp = metrics();
    } else if (request.path == "/api/frames") {
      resp = frames(request);
    } else if (request.path == "/api/series") {
      resp = series(request);
    } else if (request.path == "/api/timeline") {
      resp = timeline(request);
    } else if (request.path == "/api/peak") {
      resp = peak_route(request);
    } else {
      resp = error(404, "not_found", "no such endpoint");
    }
  } catch (const RequestError& e) {
    resp = error(e.status, e.code, e.message);
  } catch (const UnknownMetricError& e) {
    resp = error(400, "unknown_metric", e.what());
  } catch (const Error& e) {
    resp = error(400, "bad_request", e.what());
  }
  resp.key_id = std::move(key_id);
  return resp;
}

ApiResponse Api::places() const { return ok(places_to_geojson(store_.places())); }

ApiResponse Api::metrics() const {
  json arr = json::array();
  for (const auto& def : store_.metrics().defs()) arr.push_back(to_json(def));
  return ok(arr);
}

ApiResponse Api::frames(const ApiRequest& r) const {
  auto metric = metric_param(store_, r);
  auto [from, to] = range_params(store_, r);
  std::vector<Timestamp> instants;
  if (const auto* step = query_param(r, "step")) {
    Duration d(positive_int("step", *step));
    if ((to - from) / d >= static_cast<std::int64_t>(kMaxFrames))
      throw RequestError{400, "too_many_frames", "at most " + std::to_string(kMaxFrames) + " frames per request"};
    for (Timestamp t = from; t <= to; t = t + d) instants.push_back(t);
  } else {
    for (const auto& p : sum_series(store_, metric, from, to).points) instants.push_back(p.t);
    if (instants.size() > kMaxFrames)
      throw RequestError{400, "too_many_frames", "at most " + std::to_string(kMaxFrames) + " frames per request"};
  }
  const Duration staleness = staleness_for(metric);
  json arr = json::array();
  for (auto t : instants) arr.push_back(to_json(frame_at(store_, metric, t, staleness)));
  return ok(arr);
}

ApiResponse Api::series(const ApiRequest& r) const {
  const auto* list = query_param(r, "metrics");
  if (!list) throw RequestError{400, "missing_param", "parameter 'metrics' is required"};
  auto ids = split_list(*list);
  if (ids.empty()) throw RequestError{400, "missing_param", "parameter 'metrics' is required"};
  if (ids.size() > 2) throw RequestError{400, "too_many_metrics", "at most two metrics"};
  for (const auto& id : ids) require_metric(store_, id);
  bool mean = false;
  if (const auto* agg = query_param(r, "agg")) {
    if (*agg == "mean")
      mean = true;
    else if (*agg != "sum")
      throw RequestError{400, "bad_param", "parameter 'agg' must be 'sum' or 'mean'"};
  }
  auto [from, to] = range_params(store_, r);
  auto region = region_param(r);
  json arr = json::array();
  for (const auto& id : ids)
    arr.push_back(to_json(mean ? mean_series(store_, id, from, to, region) : sum_series(store_, id, from, to, region)));
  return ok(json{{"series", std::move(arr)}});
}

ApiResponse Api::timeline(const ApiRequest& r) const {
  auto metric = metric_param(store_, r);
  auto [from, to] = range_params(store_, r);
  auto sums = sum_series(store_, metric, from, to, region_param(r));
  bool any = std::any_of(sums.points.begin(), sums.points.end(), [](const auto& p) { return p.value.has_value(); });
  if (!any) throw RequestError{404, "no_data", "no values in the requested range"};
  auto stops = timeline_hues(sums);
  return ok(timeline_json(sums, stops));
}

ApiResponse Api::peak_route(const ApiRequest& r) const {
  auto metric = metric_param(store_, r);
  auto [from, to] = range_params(store_, r);
  auto sums = sum_series(store_, metric, from, to, region_param(r));
  bool any = std::any_of(sums.points.begin(), sums.points.end(), [](const auto& p) { return p.value.has_value(); });
  if (!any) throw RequestError{404, "no_data", "no values in the requested range"};
  return ok(to_json(peak(sums), metric));
}

}  // namespace crowdlens
