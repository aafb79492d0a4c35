#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/model.hpp"
#include "crowdlens/store.hpp"

namespace crowdlens {

/// Timeline colour stop. Hue is in HSL degrees: 120 (green) at the series
/// minimum, 0 (red) at the maximum, linear in between.
struct HueStop {
  Timestamp t;
  double hue = 0.0;
  double sum = 0.0;
  bool operator==(const HueStop&) const = default;
};

struct Peak {
  Timestamp t;
  double value = 0.0;
  bool operator==(const Peak&) const = default;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Ray casting; points on an edge or vertex count as inside.
bool ring_contains(const Ring& ring, LonLat p);
bool region_contains(const Region& region, LonLat p);

/// Places whose representative point lies in the region, in input order.
std::vector<Place> region_filter(std::span<const Place> places, const Region& region);
std::vector<bool> region_mask(std::span<const Place> places, const Region& region);

/// Latest sample at or before `t` no older than `staleness`, per place.
/// Derived metrics are evaluated per place with `capacity` bound to the
/// place's capacity (missing when absent).
Frame frame_at(const Store& store, std::string_view metric_id, Timestamp t, Duration staleness);

/// Instantaneous sum over places. The time axis is every distinct timestamp
/// in [from, to] at which the metric has a value at any place; the value is
/// the sum over region places (all places without a region) with a value at
/// that instant, or missing when none has one. Derived metrics are evaluated
/// at each instant from the dependency samples stamped exactly then.
Series sum_series(const Store& store, std::string_view metric_id, Timestamp from, Timestamp to,
                  const std::optional<Region>& region = std::nullopt);

/// As sum_series, but the plain mean over places with a value.
Series mean_series(const Store& store, std::string_view metric_id, Timestamp from, Timestamp to,
                   const std::optional<Region>& region = std::nullopt);

/// One stop per non-missing point. Throws Error if every point is missing.
std::vector<HueStop> timeline_hues(const Series& series);

/// clamp(value / cap, 0, 1). Throws ConfigError when cap <= 0.
double normalize_to_cap(double value, double cap);

Value density(double value, std::optional<double> capacity);

/// Earliest point attaining the maximum. Throws Error if every point is missing.
Peak peak(const Series& series);

/// HSL to RGB with the given saturation and lightness in [0, 1].
Rgb hsl_to_rgb(double hue, double saturation = 1.0, double lightness = 0.5);
std::string hex_color(Rgb c);

}  // namespace crowdlens
