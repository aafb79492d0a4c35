#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "crowdlens/error.hpp"
#include "crowdlens/time.hpp"

namespace crowdlens {

/// Real-or-missing. Missing is never folded into zero.
using Value = std::optional<double>;

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  bool operator==(const LonLat&) const = default;
};

/// Closed ring: first vertex == last vertex, at least 3 distinct vertices.
using Ring = std::vector<LonLat>;

struct PolygonGeometry {
  Ring ring;
  bool operator==(const PolygonGeometry&) const = default;
};

using Geometry = std::variant<LonLat, PolygonGeometry>;

struct Place {
  std::string id;
  std::string name;
  Geometry geometry;
  std::optional<double> capacity;

  bool is_point() const { return std::holds_alternative<LonLat>(geometry); }
  bool operator==(const Place&) const = default;
};

struct MetricDef {
  std::string id;
  std::string label;
  std::string unit;
  double cap = 1.0;
  /// Present for derived metrics.
  std::optional<std::string> expression;

  bool is_derived() const { return expression.has_value(); }
  bool operator==(const MetricDef&) const = default;
};

struct Sample {
  std::string place_id;
  Timestamp t;
  std::string metric_id;
  double value = 0.0;
  bool operator==(const Sample&) const = default;
};

struct FrameEntry {
  std::string place_id;
  Value value;
  bool operator==(const FrameEntry&) const = default;
};

/// Map state for one metric at one instant; one entry per known place, in
/// place order.
struct Frame {
  Timestamp t;
  std::string metric_id;
  std::vector<FrameEntry> values;

  Value value_of(std::string_view place_id) const;
  bool operator==(const Frame&) const = default;
};

/// One or more closed rings; a point belongs to the region if it is inside
/// any ring.
struct Region {
  std::vector<Ring> rings;

  /// Validates and closes each ring. Throws Error on fewer than 3 distinct
  /// vertices or out-of-range coordinates.
  static Region from_rings(std::vector<Ring> rings);
  static Region from_ring(Ring ring) { return from_rings({std::move(ring)}); }
};

struct SeriesPoint {
  Timestamp t;
  Value value;
  bool operator==(const SeriesPoint&) const = default;
};

/// Timestamps strictly increasing.
struct Series {
  std::string metric_id;
  std::vector<SeriesPoint> points;
  bool operator==(const Series&) const = default;
};

bool valid_lon_lat(LonLat p);

/// Returns the ring closed (last vertex == first). Throws Error when the ring
/// has fewer than 3 distinct vertices or a coordinate is out of range.
Ring close_ring(Ring ring);

/// Point geometry: the point itself. Polygon: mean of the distinct ring
/// vertices (closing vertex excluded).
LonLat representative_point(const Place& place);

/// Validates a GeoJSON FeatureCollection of places. Order-preserving.
/// Throws ValidationError naming the offending feature index.
std::vector<Place> validate_places(const nlohmann::json& document);
/// Parses GeoJSON text, then validates as above.
std::vector<Place> parse_places(std::string_view geojson_text);

nlohmann::json places_to_geojson(std::span<const Place> places);

/// Accepts a bare Polygon geometry, a Feature wrapping one, or a
/// FeatureCollection whose features are all Polygons.
Region region_from_geojson(const nlohmann::json& document);

/// Compact JSON ring form used in query strings: `[[lon,lat],...]` or a
/// list of such rings.
Region region_from_json_rings(std::string_view text);

}  // namespace crowdlens
