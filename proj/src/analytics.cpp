#include "crowdlens/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace crowdlens {

bool ring_contains(const Ring& ring, LonLat p) {
  bool inside = false;
  std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const LonLat& a = ring[j];
    const LonLat& b = ring[i];
    double cross = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
    if (cross == 0.0 && p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
        p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat))
      return true;
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      // The edge crosses the horizontal through p; it lies to the right of p
      // when the cross product's sign matches the edge direction.
      if ((cross > 0.0) == (b.lat > a.lat)) inside = !inside;
    }
  }
  return inside;
}

bool region_contains(const Region& region, LonLat p) {
  return std::any_of(region.rings.begin(), region.rings.end(),
                     [&](const Ring& r) { return ring_contains(r, p); });
}

std::vector<bool> region_mask(std::span<const Place> places, const Region& region) {
  std::vector<bool> mask(places.size());
  for (std::size_t i = 0; i < places.size(); ++i)
    mask[i] = region_contains(region, representative_point(places[i]));
  return mask;
}

std::vector<Place> region_filter(std::span<const Place> places, const Region& region) {
  std::vector<Place> out;
  auto mask = region_mask(places, region);
  for (std::size_t i = 0; i < places.size(); ++i)
    if (mask[i]) out.push_back(places[i]);
  return out;
}

namespace {

Value frame_value(const StoreReader& r, std::size_t place, std::size_t metric, Timestamp t,
                  Duration staleness) {
  const auto& metrics = r.metrics();
  if (!metrics.def(metric).is_derived()) {
    auto col = r.column(place, metric);
    auto idx = col.at_or_before(t);
    if (!idx) return std::nullopt;
    if (t - Timestamp(col.times[*idx]) > staleness) return std::nullopt;
    return col.values[*idx];
  }
  const auto& slots = metrics.slot_metrics(metric);
  std::vector<Value> inputs;
  inputs.reserve(slots.size());
  for (const auto& s : slots)
    inputs.push_back(s ? frame_value(r, place, *s, t, staleness) : r.places()[place].capacity);
  return metrics.compiled(metric).run(inputs);
}

Value exact_value(const StoreReader& r, std::size_t place, std::size_t metric, Timestamp t) {
  const auto& metrics = r.metrics();
  if (!metrics.def(metric).is_derived()) {
    auto col = r.column(place, metric);
    auto idx = col.exactly(t);
    if (!idx) return std::nullopt;
    return col.values[*idx];
  }
  const auto& slots = metrics.slot_metrics(metric);
  std::vector<Value> inputs;
  inputs.reserve(slots.size());
  for (const auto& s : slots)
    inputs.push_back(s ? exact_value(r, place, *s, t) : r.places()[place].capacity);
  return metrics.compiled(metric).run(inputs);
}

enum class Aggregate { Sum, Mean };

Series aggregate_series(const Store& store, std::string_view metric_id, Timestamp from,
                        Timestamp to, const std::optional<Region>& region, Aggregate agg) {
  StoreReader r(store);
  const auto& places = r.places();
  std::size_t m = r.metrics().index_of(metric_id);
  Series out{std::string(metric_id), {}};
  if (from > to) throw Error("series range has from > to");

  std::vector<bool> mask = region ? region_mask(places, *region) : std::vector<bool>(places.size(), true);

  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::unordered_map<std::int64_t, Acc> acc;
  const bool derived = r.metrics().def(m).is_derived();
  const auto& bases = r.metrics().base_dependencies(m);

  std::vector<std::int64_t> times;
  for (std::size_t p = 0; p < places.size(); ++p) {
    if (!derived) {
      auto col = r.column(p, m);
      auto [lo, hi] = col.range(from, to);
      if (!mask[p]) {
        for (std::size_t k = lo; k < hi; ++k) acc.try_emplace(col.times[k]);
        continue;
      }
      for (std::size_t k = lo; k < hi; ++k) {
        Acc& a = acc[col.times[k]];
        a.sum += col.values[k];
        ++a.count;
      }
      continue;
    }

    times.clear();
    for (std::size_t b : bases) {
      auto col = r.column(p, b);
      auto [lo, hi] = col.range(from, to);
      times.insert(times.end(), col.times.begin() + static_cast<std::ptrdiff_t>(lo),
                   col.times.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (std::int64_t t : times) {
      Acc& a = acc[t];
      if (!mask[p]) continue;
      if (Value v = exact_value(r, p, m, Timestamp(t))) {
        a.sum += *v;
        ++a.count;
      }
    }
  }

  out.points.reserve(acc.size());
  for (const auto& [t, a] : acc) {
    Value v;
    if (a.count > 0) v = agg == Aggregate::Sum ? a.sum : a.sum / static_cast<double>(a.count);
    out.points.push_back({Timestamp(t), v});
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const SeriesPoint& a, const SeriesPoint& b) { return a.t < b.t; });
  return out;
}

}  // namespace

Frame frame_at(const Store& store, std::string_view metric_id, Timestamp t, Duration staleness) {
  if (staleness <= Duration::zero()) throw Error("staleness must be positive");
  StoreReader r(store);
  std::size_t m = r.metrics().index_of(metric_id);
  Frame f{t, std::string(metric_id), {}};
  f.values.reserve(r.places().size());
  for (std::size_t p = 0; p < r.places().size(); ++p)
    f.values.push_back({r.places()[p].id, frame_value(r, p, m, t, staleness)});
  return f;
}

Series sum_series(const Store& store, std::string_view metric_id, Timestamp from, Timestamp to,
                  const std::optional<Region>& region) {
  return aggregate_series(store, metric_id, from, to, region, Aggregate::Sum);
}

Series mean_series(const Store& store, std::string_view metric_id, Timestamp from, Timestamp to,
                   const std::optional<Region>& region) {
  return aggregate_series(store, metric_id, from, to, region, Aggregate::Mean);
}

std::vector<HueStop> timeline_hues(const Series& series) {
  std::optional<double> lo, hi;
  for (const auto& p : series.points) {
    if (!p.value) continue;
    lo = lo ? std::min(*lo, *p.value) : *p.value;
    hi = hi ? std::max(*hi, *p.value) : *p.value;
  }
  if (!lo) throw Error("timeline needs at least one non-missing value");

  // Halving keeps the span finite for sums near the double range.
  const bool halve = !std::isfinite(*hi - *lo);
  const double scale = halve ? 0.5 : 1.0;
  const double span = *hi * scale - *lo * scale;

  std::vector<HueStop> stops;
  for (const auto& p : series.points) {
    if (!p.value) continue;
    double hue = 120.0;
    if (span > 0.0) hue = 120.0 * (1.0 - (*p.value * scale - *lo * scale) / span);
    stops.push_back({p.t, std::clamp(hue, 0.0, 120.0), *p.value});
  }
  return stops;
}

double normalize_to_cap(double value, double cap) {
  if (!(cap > 0.0)) throw ConfigError("cap must be positive");
  return std::clamp(value / cap, 0.0, 1.0);
}

Value density(double value, std::optional<double> capacity) {
  if (!capacity || !(*capacity > 0.0)) return std::nullopt;
  double d = value / *capacity;
  if (!std::isfinite(d)) return std::nullopt;
  return d;
}

Peak peak(const Series& series) {
  std::optional<Peak> best;
  for (const auto& p : series.points)
    if (p.value && (!best || *p.value > best->value)) best = Peak{p.t, *p.value};
  if (!best) throw Error("peak needs at least one non-missing value");
  return *best;
}

Rgb hsl_to_rgb(double hue, double saturation, double lightness) {
  double h = std::fmod(hue, 360.0);
  if (h < 0) h += 360.0;
  double c = (1.0 - std::abs(2.0 * lightness - 1.0)) * saturation;
  double hp = h / 60.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  double m = lightness - c / 2.0;
  auto to8 = [m](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp((v + m) * 255.0, 0.0, 255.0)));
  };
  return {to8(r), to8(g), to8(b)};
}

std::string hex_color(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace crowdlens
