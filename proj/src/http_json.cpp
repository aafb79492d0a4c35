#include <chrono>
#include <deque>

#include <httplib.h>
#include <json.hpp>

#include "crowdlens/sample_csv.hpp"
#include "drivers.hpp"

namespace crowdlens::detail {
namespace {

using nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always starts with '/'
  std::string display; // origin + path without credentials
};

Endpoint parse_url(const std::string& url, const std::string& source) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http")
    throw ConfigError("source '" + source + "': url must start with http://");
  auto host_start = scheme_end + 3;
  auto path_start = url.find('/', host_start);
  std::string authority = url.substr(host_start, path_start == std::string::npos ? std::string::npos : path_start - host_start);
  if (auto at = authority.rfind('@'); at != std::string::npos) authority = authority.substr(at + 1);
  if (authority.empty()) throw ConfigError("source '" + source + "': url has no host");
  Endpoint e;
  e.origin = "http://" + authority;
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  e.display = e.origin + e.path;
  return e;
}

json get_json(const SourceDescriptor& src, const Endpoint& ep, const httplib::Params& query) {
  httplib::Client client(ep.origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(std::chrono::seconds(30));
  httplib::Headers headers;
  if (auto token = src.optional_param("token")) headers.emplace("Authorization", "Bearer " + *token);
  auto res = client.Get(ep.path, query, headers);
  if (!res)
    throw ConnectorError("source '" + src.name + "': request to " + ep.display + " failed: " +
                         httplib::to_string(res.error()));
  if (res->status != 200)
    throw ConnectorError("source '" + src.name + "': " + ep.display + " answered HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw ConnectorError("source '" + src.name + "': " + ep.display + " returned invalid JSON");
  }
}

struct FieldMap {
  std::string place = "place_id";
  std::string time = "timestamp";
  std::string metric = "metric_id";
  std::string value = "value";
  /// Wide records: one value field per metric.
  std::vector<std::pair<std::string, std::string>> wide;
};

FieldMap field_map(const SourceDescriptor& src) {
  FieldMap f;
  if (auto v = src.optional_param("field.place")) f.place = *v;
  if (auto v = src.optional_param("field.time")) f.time = *v;
  if (auto v = src.optional_param("field.metric")) f.metric = *v;
  if (auto v = src.optional_param("field.value")) f.value = *v;
  for (const auto& [k, v] : src.params)
    if (k.starts_with("value.")) f.wide.emplace_back(k.substr(6), v);
  return f;
}

const json& field(const json& rec, const std::string& name, const SourceDescriptor& src, std::size_t page,
                  std::size_t index) {
  if (!rec.is_object() || !rec.contains(name))
    throw ConnectorError("source '" + src.name + "': schema mismatch, record " + std::to_string(index) +
                         " on page " + std::to_string(page) + " lacks field '" + name + "'");
  return rec[name];
}

std::optional<double> number_of(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      const auto& s = v.get_ref<const std::string&>();
      double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

Timestamp time_of(const json& v, const SourceDescriptor& src) {
  if (v.is_number_integer()) return Timestamp(v.get<std::int64_t>());
  if (v.is_string()) {
    try {
      return Timestamp::parse(v.get<std::string>());
    } catch (const ParseError&) {
    }
  }
  throw ConnectorError("source '" + src.name + "': schema mismatch, bad timestamp " + v.dump());
}

std::string string_of(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void map_record(const json& rec, const FieldMap& f, const SourceDescriptor& src, std::size_t page,
                std::size_t index, std::vector<Sample>& out) {
  std::string place = string_of(field(rec, f.place, src, page, index));
  Timestamp t = time_of(field(rec, f.time, src, page, index), src);
  auto push = [&](std::string metric, const json& raw) {
    if (raw.is_null()) return;  // missing observation
    auto v = number_of(raw);
    if (!v || !std::isfinite(*v))
      throw ConnectorError("source '" + src.name + "': schema mismatch, non-numeric value " + raw.dump());
    out.push_back({place, t, std::move(metric), *v});
  };
  if (!f.wide.empty()) {
    for (const auto& [metric, name] : f.wide) push(metric, field(rec, name, src, page, index));
  } else {
    push(string_of(field(rec, f.metric, src, page, index)), field(rec, f.value, src, page, index));
  }
}

std::vector<Sample> fetch_pages(const SourceDescriptor& src, Timestamp from, Timestamp to) {
  Endpoint ep = parse_url(src.param("url"), src.name);
  FieldMap fields = field_map(src);
  auto first_page = static_cast<std::size_t>(src.number_param("first_page", 1.0));
  auto max_pages = static_cast<std::size_t>(src.number_param("max_pages", 10000.0));
  std::vector<Sample> out;
  for (std::size_t page = first_page; page < first_page + max_pages; ++page) {
    httplib::Params query{{"from", from.iso()}, {"to", to.iso()}, {"page", std::to_string(page)}};
    if (auto ps = src.optional_param("page_size")) query.emplace("page_size", *ps);
    json body = get_json(src, ep, query);
    if (!body.is_array())
      throw ConnectorError("source '" + src.name + "': schema mismatch, page " + std::to_string(page) +
                           " is not a JSON array");
    if (body.empty()) break;
    for (std::size_t i = 0; i < body.size(); ++i) map_record(body[i], fields, src, page, i, out);
  }
  return out;
}

std::vector<Sample> keep(std::vector<Sample> samples, const std::vector<std::string>& metrics,
                         Timestamp from, Timestamp to) {
  std::erase_if(samples, [&](const Sample& s) {
    return s.t < from || s.t > to || std::find(metrics.begin(), metrics.end(), s.metric_id) == metrics.end();
  });
  return samples;
}

/// Polls the endpoint every cadence for samples newer than the last
/// delivered instant.
class PollingStream : public SampleStream {
 public:
  explicit PollingStream(SourceDescriptor src)
      : src_(std::move(src)),
        cadence_(std::chrono::milliseconds(static_cast<std::int64_t>(src_.number_param("cadence_s") * 1000))) {
    if (auto s = src_.optional_param("start")) watermark_ = Timestamp::parse(*s) - Duration(1);
  }

  std::optional<SampleBatch> next(std::stop_token stop) override {
    while (pending_.empty()) {
      if (polled_ && !sleep_until(stop, std::chrono::steady_clock::now() + cadence_)) return std::nullopt;
      if (stop.stop_requested()) return std::nullopt;
      polled_ = true;
      auto now = Timestamp(std::chrono::duration_cast<std::chrono::seconds>(
                               std::chrono::system_clock::now().time_since_epoch()).count());
      Timestamp from = watermark_ ? *watermark_ + Duration(1) : Timestamp(0);
      if (from > now) continue;
      auto samples = keep(fetch_pages(src_, from, now), src_.metrics, from, now);
      for (auto& b : batch_by_time(std::move(samples))) {
        watermark_ = b.t;
        pending_.push_back(std::move(b));
      }
    }
    auto b = std::move(pending_.front());
    pending_.pop_front();
    return b;
  }

 private:
  SourceDescriptor src_;
  std::chrono::milliseconds cadence_;
  std::optional<Timestamp> watermark_;
  std::deque<SampleBatch> pending_;
  bool polled_ = false;
};

}  // namespace

DriverInfo make_http_json_driver() {
  DriverInfo d;
  d.name = "http-json";
  d.required_params[SourceKind::Historical] = {"url"};
  d.required_params[SourceKind::Realtime] = {"url", "cadence_s"};
  d.required_params[SourceKind::Places] = {"url"};
  d.historical = [](const SourceDescriptor& src, std::span<const std::string> metric_ids, Timestamp from,
                    Timestamp to) {
    std::vector<std::string> metrics(metric_ids.begin(), metric_ids.end());
    if (metrics.empty()) metrics = src.metrics;
    return keep(fetch_pages(src, from, to), metrics, from, to);
  };
  d.realtime = [](const SourceDescriptor& src) -> std::unique_ptr<SampleStream> {
    return std::make_unique<PollingStream>(src);
  };
  d.places = [](const SourceDescriptor& src) {
    Endpoint ep = parse_url(src.param("url"), src.name);
    return validate_places(get_json(src, ep, {}));
  };
  return d;
}

}  // namespace crowdlens::detail
