#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/config.hpp"
#include "crowdlens/model.hpp"

namespace crowdlens {

/// All samples a realtime source delivered for one instant.
struct SampleBatch {
  Timestamp t;
  std::vector<Sample> samples;
  bool operator==(const SampleBatch&) const = default;
};

/// Pull side of a realtime subscription. Batch timestamps are
/// non-decreasing. `next` blocks until a batch is due and returns nullopt at
/// the normal end of the stream or when `stop` is requested; a failing source
/// throws ConnectorError, after which the stream is closed.
class SampleStream {
 public:
  virtual ~SampleStream() = default;
  virtual std::optional<SampleBatch> next(std::stop_token stop) = 0;
};

using HistoricalLoader = std::function<std::vector<Sample>(
    const SourceDescriptor&, std::span<const std::string> metric_ids, Timestamp from, Timestamp to)>;
using StreamFactory = std::function<std::unique_ptr<SampleStream>(const SourceDescriptor&)>;
using PlacesFetcher = std::function<std::vector<Place>(const SourceDescriptor&)>;

struct DriverInfo {
  std::string name;
  HistoricalLoader historical;
  StreamFactory realtime;
  PlacesFetcher places;
  /// Required parameter names per endpoint kind the driver serves.
  std::map<SourceKind, std::vector<std::string>> required_params;

  bool supports(SourceKind kind) const;
};

/// Drivers keyed by name. Adding a data source means registering a driver.
class DriverRegistry {
 public:
  /// Registry preloaded with csv-file, geojson-file, http-json, replay and
  /// synthetic.
  static DriverRegistry& global();

  void add(DriverInfo driver);
  const DriverInfo* find(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, DriverInfo, std::less<>> drivers_;
};

/// Samples with from <= t <= to for the requested metrics (all of the
/// source's metrics when `metric_ids` is empty).
std::vector<Sample> historical_load(const SourceDescriptor& source,
                                    std::span<const std::string> metric_ids, Timestamp from,
                                    Timestamp to);

std::unique_ptr<SampleStream> realtime_subscribe(const SourceDescriptor& source);

std::vector<Place> places_fetch(const SourceDescriptor& source);

/// Concatenation of every places source, in config order.
std::vector<Place> load_all_places(const AppConfig& config);

/// Groups samples by timestamp into batches; stable within a timestamp.
std::vector<SampleBatch> batch_by_time(std::vector<Sample> samples);

}  // namespace crowdlens
