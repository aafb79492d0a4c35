#include "crowdlens/store.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#include "crowdlens/sample_csv.hpp"

namespace crowdlens {

std::pair<std::size_t, std::size_t> ColumnView::range(Timestamp from, Timestamp to) const {
  auto lo = std::lower_bound(times.begin(), times.end(), from.epoch_seconds());
  auto hi = std::upper_bound(lo, times.end(), to.epoch_seconds());
  return {static_cast<std::size_t>(lo - times.begin()), static_cast<std::size_t>(hi - times.begin())};
}

std::optional<std::size_t> ColumnView::at_or_before(Timestamp t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t.epoch_seconds());
  if (it == times.begin()) return std::nullopt;
  return static_cast<std::size_t>(it - times.begin()) - 1;
}

std::optional<std::size_t> ColumnView::exactly(Timestamp t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t.epoch_seconds());
  if (it == times.end() || *it != t.epoch_seconds()) return std::nullopt;
  return static_cast<std::size_t>(it - times.begin());
}

StoreReader::StoreReader(const Store& store) : store_(store), lock_(store.mutex_) {}

const std::vector<Place>& StoreReader::places() const { return store_.places_; }
const MetricCatalog& StoreReader::metrics() const { return store_.metrics_; }

ColumnView StoreReader::column(std::size_t place_index, std::size_t metric_index) const {
  const auto& c = store_.column_for(place_index, metric_index);
  return {c.times, c.values};
}

Store::Store(std::vector<Place> places, MetricCatalog metrics)
    : places_(std::move(places)), metrics_(std::move(metrics)) {
  for (std::size_t i = 0; i < places_.size(); ++i)
    if (!place_lookup_.emplace(places_[i].id, i).second)
      throw IntegrityError("duplicate place id '" + places_[i].id + "'");
  columns_.resize(places_.size() * metrics_.size());
}

std::optional<std::size_t> Store::place_index(std::string_view id) const {
  auto it = place_lookup_.find(std::string(id));
  if (it == place_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t Store::upsert(std::span<const Sample> samples) {
  std::unique_lock lock(mutex_);
  return upsert_locked(samples);
}

std::size_t Store::upsert_locked(std::span<const Sample> samples) {
  struct Entry {
    std::size_t column;
    std::int64_t t;
    double value;
  };
  std::vector<Entry> entries;
  entries.reserve(samples.size());

  std::unordered_map<std::string, std::size_t> metric_lookup;
  for (std::size_t m = 0; m < metrics_.size(); ++m)
    if (!metrics_.def(m).is_derived()) metric_lookup.emplace(metrics_.def(m).id, m);

  // Validate the whole batch before touching any column.
  const std::string* last_place = nullptr;
  std::size_t last_place_idx = 0;
  for (const auto& s : samples) {
    std::size_t p = 0;
    if (last_place && *last_place == s.place_id) {
      p = last_place_idx;
    } else {
      auto it = place_lookup_.find(s.place_id);
      if (it == place_lookup_.end())
        throw IntegrityError("sample references unknown place '" + s.place_id + "'");
      p = it->second;
      last_place = &s.place_id;
      last_place_idx = p;
    }
    auto mit = metric_lookup.find(s.metric_id);
    if (mit == metric_lookup.end())
      throw IntegrityError("sample references unknown base metric '" + s.metric_id + "'");
    if (!std::isfinite(s.value))
      throw IntegrityError("sample for '" + s.place_id + "' at " + s.t.iso() + " is not finite");
    entries.push_back({p * metrics_.size() + mit->second, s.t.epoch_seconds(), s.value});
  }

  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.column, a.t) < std::tie(b.column, b.t);
  });

  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].column == entries[i].column) ++j;
    Column& col = columns_[entries[i].column];

    // Collapse duplicate timestamps in the batch; the later sample wins.
    std::vector<std::int64_t> nt;
    std::vector<double> nv;
    nt.reserve(j - i);
    nv.reserve(j - i);
    for (std::size_t k = i; k < j; ++k) {
      if (!nt.empty() && nt.back() == entries[k].t) {
        nv.back() = entries[k].value;
      } else {
        nt.push_back(entries[k].t);
        nv.push_back(entries[k].value);
      }
    }

    if (col.times.empty() || nt.front() > col.times.back()) {
      col.times.insert(col.times.end(), nt.begin(), nt.end());
      col.values.insert(col.values.end(), nv.begin(), nv.end());
    } else {
      Column merged;
      merged.times.reserve(col.times.size() + nt.size());
      merged.values.reserve(col.times.size() + nt.size());
      std::size_t a = 0, b = 0;
      while (a < col.times.size() || b < nt.size()) {
        if (b == nt.size() || (a < col.times.size() && col.times[a] < nt[b])) {
          merged.times.push_back(col.times[a]);
          merged.values.push_back(col.values[a]);
          ++a;
        } else {
          if (a < col.times.size() && col.times[a] == nt[b]) ++a;
          merged.times.push_back(nt[b]);
          merged.values.push_back(nv[b]);
          ++b;
        }
      }
      col = std::move(merged);
    }
    i = j;
  }
  return samples.size();
}

std::vector<Sample> Store::query_range(
    std::string_view metric_id, Timestamp from, Timestamp to,
    const std::optional<std::set<std::string, std::less<>>>& place_filter) const {
  std::shared_lock lock(mutex_);
  auto m = metrics_.find(metric_id);
  if (!m || metrics_.def(*m).is_derived()) throw UnknownMetricError(std::string(metric_id));
  if (from > to) return {};

  std::vector<Sample> out;
  for (std::size_t p = 0; p < places_.size(); ++p) {
    if (place_filter && !place_filter->contains(places_[p].id)) continue;
    const Column& c = column_for(p, *m);
    ColumnView view{c.times, c.values};
    auto [lo, hi] = view.range(from, to);
    for (std::size_t k = lo; k < hi; ++k)
      out.push_back({places_[p].id, Timestamp(c.times[k]), std::string(metric_id), c.values[k]});
  }
  std::sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) {
    return std::tie(a.t, a.place_id) < std::tie(b.t, b.place_id);
  });
  return out;
}

StoreStats Store::stats() const {
  std::shared_lock lock(mutex_);
  StoreStats st;
  std::vector<bool> metric_used(metrics_.size(), false);
  for (std::size_t p = 0; p < places_.size(); ++p) {
    bool place_used = false;
    for (std::size_t m = 0; m < metrics_.size(); ++m) {
      const Column& c = column_for(p, m);
      if (c.times.empty()) continue;
      place_used = true;
      metric_used[m] = true;
      st.sample_count += c.times.size();
      Timestamp lo(c.times.front()), hi(c.times.back());
      if (!st.t_min || lo < *st.t_min) st.t_min = lo;
      if (!st.t_max || hi > *st.t_max) st.t_max = hi;
    }
    if (place_used) ++st.place_count;
  }
  st.metric_count = static_cast<std::size_t>(std::count(metric_used.begin(), metric_used.end(), true));
  return st;
}

void Store::write_csv(std::ostream& out) const {
  std::vector<Sample> all;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t p = 0; p < places_.size(); ++p)
      for (std::size_t m = 0; m < metrics_.size(); ++m) {
        const Column& c = column_for(p, m);
        for (std::size_t k = 0; k < c.times.size(); ++k)
          all.push_back({places_[p].id, Timestamp(c.times[k]), metrics_.def(m).id, c.values[k]});
      }
  }
  std::sort(all.begin(), all.end(), [](const Sample& a, const Sample& b) {
    return std::tie(a.t, a.place_id, a.metric_id) < std::tie(b.t, b.place_id, b.metric_id);
  });
  write_sample_csv(out, all);
}

void Store::save_snapshot(const std::filesystem::path& path) const {
  std::ostringstream ss;
  write_csv(ss);
  write_file_atomic(path, ss.str());
}

StoreStats Store::load_snapshot(const std::filesystem::path& path) {
  auto samples = read_sample_csv(path);
  {
    std::unique_lock lock(mutex_);
    std::vector<Column> previous(columns_.size());
    previous.swap(columns_);
    try {
      upsert_locked(samples);
    } catch (...) {
      columns_.swap(previous);
      throw;
    }
  }
  return stats();
}

void Store::clear() {
  std::unique_lock lock(mutex_);
  for (auto& c : columns_) c = Column{};
}

}  // namespace crowdlens
