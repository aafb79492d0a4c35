#include "crowdlens/connectors.hpp"

#include <algorithm>
#include <unordered_set>

#include "crowdlens/sample_csv.hpp"
#include "crowdlens/synthetic.hpp"
#include "drivers.hpp"

namespace crowdlens {

bool DriverInfo::supports(SourceKind kind) const {
  switch (kind) {
    case SourceKind::Historical: return static_cast<bool>(historical);
    case SourceKind::Realtime: return static_cast<bool>(realtime);
    case SourceKind::Places: return static_cast<bool>(places);
  }
  return false;
}

std::vector<SampleBatch> batch_by_time(std::vector<Sample> samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const Sample& a, const Sample& b) { return a.t < b.t; });
  std::vector<SampleBatch> batches;
  for (auto& s : samples) {
    if (batches.empty() || batches.back().t != s.t) batches.push_back({s.t, {}});
    batches.back().samples.push_back(std::move(s));
  }
  return batches;
}

namespace {

std::vector<Sample> filter_window(std::vector<Sample> samples, const SourceDescriptor& source,
                                  std::span<const std::string> metric_ids, Timestamp from, Timestamp to) {
  std::span<const std::string> wanted = metric_ids.empty() ? std::span<const std::string>(source.metrics) : metric_ids;
  std::unordered_set<std::string> metrics(wanted.begin(), wanted.end());
  std::vector<Sample> out;
  for (auto& s : samples)
    if (s.t >= from && s.t <= to && metrics.contains(s.metric_id)) out.push_back(std::move(s));
  return out;
}

double speed_param(const SourceDescriptor& source, double fallback) {
  double speed = source.number_param("speed", fallback);
  if (speed < 0) throw ConfigError("source '" + source.name + "': speed must be non-negative");
  return speed;
}

/// Emits pre-built batches paced by their timestamps divided by `speed`; a
/// speed of 0 emits without waiting.
class PacedStream : public SampleStream {
 public:
  using Source = std::function<std::optional<SampleBatch>()>;

  PacedStream(Source source, double speed) : source_(std::move(source)), speed_(speed) {}

  std::optional<SampleBatch> next(std::stop_token stop) override {
    if (stop.stop_requested()) return std::nullopt;
    auto batch = source_();
    if (!batch) return std::nullopt;
    auto now = std::chrono::steady_clock::now();
    if (!origin_) origin_ = std::make_pair(now, batch->t);
    if (speed_ > 0.0) {
      double offset = static_cast<double>((batch->t - origin_->second).count()) / speed_;
      auto deadline = origin_->first + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double>(offset));
      if (!detail::sleep_until(stop, deadline)) return std::nullopt;
    }
    return batch;
  }

 private:
  Source source_;
  double speed_;
  std::optional<std::pair<std::chrono::steady_clock::time_point, Timestamp>> origin_;
};

DriverInfo make_csv_driver() {
  DriverInfo d;
  d.name = "csv-file";
  d.required_params[SourceKind::Historical] = {"path"};
  d.historical = [](const SourceDescriptor& src, std::span<const std::string> metrics, Timestamp from,
                    Timestamp to) {
    return filter_window(read_sample_csv(src.path_param("path")), src, metrics, from, to);
  };
  return d;
}

DriverInfo make_geojson_driver() {
  DriverInfo d;
  d.name = "geojson-file";
  d.required_params[SourceKind::Places] = {"path"};
  d.places = [](const SourceDescriptor& src) { return parse_places(read_file(src.path_param("path"))); };
  return d;
}

DriverInfo make_replay_driver() {
  DriverInfo d;
  d.name = "replay";
  d.required_params[SourceKind::Realtime] = {"path"};
  d.realtime = [](const SourceDescriptor& src) -> std::unique_ptr<SampleStream> {
    auto all = read_sample_csv(src.path_param("path"));
    std::unordered_set<std::string> metrics(src.metrics.begin(), src.metrics.end());
    std::erase_if(all, [&](const Sample& s) { return !metrics.contains(s.metric_id); });
    auto batches = std::make_shared<std::vector<SampleBatch>>(batch_by_time(std::move(all)));
    auto index = std::make_shared<std::size_t>(0);
    return std::make_unique<PacedStream>(
        [batches, index]() -> std::optional<SampleBatch> {
          if (*index >= batches->size()) return std::nullopt;
          return (*batches)[(*index)++];
        },
        speed_param(src, 1.0));
  };
  return d;
}

DriverInfo make_synthetic_driver() {
  DriverInfo d;
  d.name = "synthetic";
  d.required_params[SourceKind::Historical] = {"seed", "start", "end", "cadence_s", "places"};
  d.required_params[SourceKind::Realtime] = {"seed", "start", "cadence_s", "places"};
  d.historical = [](const SourceDescriptor& src, std::span<const std::string> metrics, Timestamp from,
                    Timestamp to) { return filter_window(synthesize(synthetic_params(src)), src, metrics, from, to); };
  d.realtime = [](const SourceDescriptor& src) -> std::unique_ptr<SampleStream> {
    auto gen = std::make_shared<SyntheticGenerator>(synthetic_params(src));
    return std::make_unique<PacedStream>([gen] { return gen->next_batch(); }, speed_param(src, 1.0));
  };
  return d;
}

}  // namespace

DriverRegistry& DriverRegistry::global() {
  static DriverRegistry* registry = [] {
    auto* r = new DriverRegistry;
    r->add(make_csv_driver());
    r->add(make_geojson_driver());
    r->add(make_replay_driver());
    r->add(make_synthetic_driver());
    r->add(detail::make_http_json_driver());
    return r;
  }();
  return *registry;
}

void DriverRegistry::add(DriverInfo driver) {
  std::lock_guard lock(mutex_);
  auto name = driver.name;
  drivers_.insert_or_assign(std::move(name), std::move(driver));
}

const DriverInfo* DriverRegistry::find(std::string_view name) const {
  std::lock_guard lock(mutex_);
  auto it = drivers_.find(name);
  return it == drivers_.end() ? nullptr : &it->second;
}

std::vector<std::string> DriverRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [k, _] : drivers_) out.push_back(k);
  return out;
}

namespace {

const DriverInfo& driver_for(const SourceDescriptor& source, SourceKind kind) {
  if (source.kind != kind)
    throw ConnectorError("source '" + source.name + "' is " + std::string(to_string(source.kind)) +
                         ", not " + std::string(to_string(kind)));
  const DriverInfo* d = DriverRegistry::global().find(source.driver);
  if (!d || !d->supports(kind))
    throw ConnectorError("source '" + source.name + "': driver '" + source.driver + "' cannot serve it");
  return *d;
}

}  // namespace

std::vector<Sample> historical_load(const SourceDescriptor& source, std::span<const std::string> metric_ids,
                                    Timestamp from, Timestamp to) {
  if (from > to) throw ConnectorError("historical window has from > to");
  return driver_for(source, SourceKind::Historical).historical(source, metric_ids, from, to);
}

std::unique_ptr<SampleStream> realtime_subscribe(const SourceDescriptor& source) {
  return driver_for(source, SourceKind::Realtime).realtime(source);
}

std::vector<Place> places_fetch(const SourceDescriptor& source) {
  return driver_for(source, SourceKind::Places).places(source);
}

std::vector<Place> load_all_places(const AppConfig& config) {
  std::vector<Place> all;
  std::unordered_set<std::string> ids;
  for (const auto& src : config.sources) {
    if (src.kind != SourceKind::Places) continue;
    for (auto& p : places_fetch(src)) {
      if (!ids.insert(p.id).second)
        throw ConfigError("place '" + p.id + "' is defined by more than one places source");
      all.push_back(std::move(p));
    }
  }
  return all;
}

}  // namespace crowdlens
