#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crowdlens/expr.hpp"
#include "crowdlens/model.hpp"

namespace crowdlens {

struct StoreStats {
  std::size_t sample_count = 0;
  std::size_t place_count = 0;   // places holding at least one sample
  std::size_t metric_count = 0;  // metrics holding at least one sample
  std::optional<Timestamp> t_min;
  std::optional<Timestamp> t_max;
  bool operator==(const StoreStats&) const = default;
};

/// Time-ordered samples of one (place, metric) pair, stored as parallel
/// columns.
struct ColumnView {
  std::span<const std::int64_t> times;
  std::span<const double> values;

  std::size_t size() const { return times.size(); }
  /// Half-open index range of samples with from <= t <= to.
  std::pair<std::size_t, std::size_t> range(Timestamp from, Timestamp to) const;
  /// Index of the latest sample at or before `t`.
  std::optional<std::size_t> at_or_before(Timestamp t) const;
  /// Index of the sample exactly at `t`.
  std::optional<std::size_t> exactly(Timestamp t) const;
};

class Store;

/// Consistent read view: holds the store's shared lock for its lifetime, so
/// every read through it sees whole upsert batches only.
class StoreReader {
 public:
  explicit StoreReader(const Store& store);

  const std::vector<Place>& places() const;
  const MetricCatalog& metrics() const;
  /// Column of a base metric; empty when no samples were stored.
  ColumnView column(std::size_t place_index, std::size_t metric_index) const;

 private:
  const Store& store_;
  std::shared_lock<std::shared_mutex> lock_;
};

/// In-process store of base-metric samples keyed by (place, t, metric).
/// Concurrent readers, serialized writers; upsert batches are atomic.
class Store {
 public:
  Store(std::vector<Place> places, MetricCatalog metrics);

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Inserts or replaces every sample; returns the batch size. The whole batch
  /// is rejected with IntegrityError (naming the first offender) when a sample
  /// names an unknown place, an unknown or derived metric, or holds a
  /// non-finite value. Within a batch the last sample for a key wins.
  std::size_t upsert(std::span<const Sample> samples);

  /// Inclusive bounds, sorted by (t, place_id). Derived metrics are not
  /// stored; asking for one throws UnknownMetricError like any unknown id.
  std::vector<Sample> query_range(std::string_view metric_id, Timestamp from, Timestamp to,
                                  const std::optional<std::set<std::string, std::less<>>>&
                                      place_filter = std::nullopt) const;

  StoreStats stats() const;

  /// CSV sample schema, rows sorted by (t, place_id, metric_id).
  void write_csv(std::ostream& out) const;
  void save_snapshot(const std::filesystem::path& path) const;
  /// Replaces the store contents. On error the store is left unchanged.
  StoreStats load_snapshot(const std::filesystem::path& path);

  void clear();

  const std::vector<Place>& places() const { return places_; }
  const MetricCatalog& metrics() const { return metrics_; }
  std::optional<std::size_t> place_index(std::string_view id) const;

 private:
  friend class StoreReader;

  struct Column {
    std::vector<std::int64_t> times;
    std::vector<double> values;
  };

  Column& column_for(std::size_t place, std::size_t metric) {
    return columns_[place * metrics_.size() + metric];
  }
  const Column& column_for(std::size_t place, std::size_t metric) const {
    return columns_[place * metrics_.size() + metric];
  }

  std::size_t upsert_locked(std::span<const Sample> samples);

  std::vector<Place> places_;
  MetricCatalog metrics_;
  std::unordered_map<std::string, std::size_t> place_lookup_;
  std::vector<Column> columns_;
  mutable std::shared_mutex mutex_;
};

}  // namespace crowdlens
