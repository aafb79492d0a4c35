#include "crowdlens/model.hpp"

#include <cmath>
#include <unordered_set>

namespace crowdlens {

using nlohmann::json;

CycleError::CycleError(std::vector<std::string> ids)
    : Error([&] {
        std::string msg = "metric dependency cycle:";
        for (const auto& id : ids) msg += " " + id;
        return msg;
      }()),
      ids_(std::move(ids)) {}

Value Frame::value_of(std::string_view place_id) const {
  for (const auto& e : values)
    if (e.place_id == place_id) return e.value;
  return std::nullopt;
}

bool valid_lon_lat(LonLat p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 && p.lon <= 180.0 &&
         p.lat >= -90.0 && p.lat <= 90.0;
}

namespace {

std::size_t distinct_vertices(const Ring& ring) {
  std::vector<LonLat> seen;
  for (const auto& p : ring) {
    bool dup = false;
    for (const auto& q : seen)
      if (q == p) {
        dup = true;
        break;
      }
    if (!dup) seen.push_back(p);
  }
  return seen.size();
}

}  // namespace

Ring close_ring(Ring ring) {
  for (const auto& p : ring)
    if (!valid_lon_lat(p)) throw Error("ring coordinate out of range");
  if (distinct_vertices(ring) < 3) throw Error("ring needs at least 3 distinct vertices");
  if (ring.front() != ring.back()) ring.push_back(ring.front());
  return ring;
}

Region Region::from_rings(std::vector<Ring> rings) {
  if (rings.empty()) throw Error("region needs at least one ring");
  Region r;
  for (auto& ring : rings) r.rings.push_back(close_ring(std::move(ring)));
  return r;
}

LonLat representative_point(const Place& place) {
  if (const auto* p = std::get_if<LonLat>(&place.geometry)) return *p;
  const auto& ring = std::get<PolygonGeometry>(place.geometry).ring;
  std::size_t n = ring.size();
  if (n > 1 && ring.front() == ring.back()) --n;
  double lon = 0.0, lat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lon += ring[i].lon;
    lat += ring[i].lat;
  }
  return {lon / static_cast<double>(n), lat / static_cast<double>(n)};
}

namespace {

LonLat parse_position(const json& j) {
  if (!j.is_array() || j.size() < 2 || !j[0].is_number() || !j[1].is_number())
    throw Error("position must be [lon, lat]");
  LonLat p{j[0].get<double>(), j[1].get<double>()};
  if (!valid_lon_lat(p)) throw Error("coordinate out of range");
  return p;
}

Ring parse_ring(const json& j) {
  if (!j.is_array()) throw Error("ring must be an array of positions");
  Ring ring;
  for (const auto& pos : j) ring.push_back(parse_position(pos));
  return ring;
}

Ring parse_polygon_outer(const json& coords) {
  if (!coords.is_array() || coords.empty()) throw Error("polygon needs one ring");
  if (coords.size() > 1) throw Error("polygon holes are not supported");
  return parse_ring(coords[0]);
}

Geometry parse_geometry(const json& g) {
  if (!g.is_object() || !g.contains("type") || !g["type"].is_string())
    throw Error("feature has no geometry");
  const auto type = g["type"].get<std::string>();
  if (!g.contains("coordinates")) throw Error("geometry has no coordinates");
  if (type == "Point") return parse_position(g["coordinates"]);
  if (type == "Polygon") {
    Ring ring = parse_polygon_outer(g["coordinates"]);
    if (ring.size() < 4 || ring.front() != ring.back()) throw Error("polygon ring must be closed");
    if (distinct_vertices(ring) < 3) throw Error("polygon ring needs at least 3 distinct vertices");
    return PolygonGeometry{std::move(ring)};
  }
  throw Error("unsupported geometry type '" + type + "'");
}

json position_json(LonLat p) { return json::array({p.lon, p.lat}); }

json ring_json(const Ring& ring) {
  json arr = json::array();
  for (const auto& p : ring) arr.push_back(position_json(p));
  return arr;
}

}  // namespace

std::vector<Place> validate_places(const json& document) {
  if (!document.is_object() || document.value("type", "") != "FeatureCollection" ||
      !document.contains("features") || !document["features"].is_array())
    throw Error("places document must be a GeoJSON FeatureCollection");

  std::vector<Place> places;
  std::unordered_set<std::string> ids;
  const auto& features = document["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    auto fail = [i](const std::string& msg) -> void {
      throw ValidationError("feature " + std::to_string(i) + ": " + msg, i);
    };
    if (!f.is_object() || f.value("type", "") != "Feature") fail("not a GeoJSON Feature");
    const json empty = json::object();
    const json& props = f.contains("properties") && f["properties"].is_object() ? f["properties"] : empty;

    Place place;
    if (!props.contains("id") || !props["id"].is_string() || props["id"].get<std::string>().empty())
      fail("missing id");
    place.id = props["id"].get<std::string>();
    if (!props.contains("name") || !props["name"].is_string()) fail("missing name");
    place.name = props["name"].get<std::string>();

    if (props.contains("capacity") && !props["capacity"].is_null()) {
      if (!props["capacity"].is_number()) fail("capacity must be a number");
      double cap = props["capacity"].get<double>();
      if (!(cap > 0.0) || !std::isfinite(cap)) fail("capacity must be positive");
      place.capacity = cap;
    }

    try {
      place.geometry = parse_geometry(f.contains("geometry") ? f["geometry"] : json());
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }

    if (!ids.insert(place.id).second) fail("duplicate id '" + place.id + "'");
    places.push_back(std::move(place));
  }
  return places;
}

std::vector<Place> parse_places(std::string_view geojson_text) {
  json doc;
  try {
    doc = json::parse(geojson_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("places document is not valid JSON: ") + e.what(), e.byte);
  }
  return validate_places(doc);
}

json places_to_geojson(std::span<const Place> places) {
  json features = json::array();
  for (const auto& p : places) {
    json props = {{"id", p.id}, {"name", p.name}};
    if (p.capacity) props["capacity"] = *p.capacity;
    json geometry;
    if (const auto* pt = std::get_if<LonLat>(&p.geometry)) {
      geometry = {{"type", "Point"}, {"coordinates", position_json(*pt)}};
    } else {
      const auto& poly = std::get<PolygonGeometry>(p.geometry);
      geometry = {{"type", "Polygon"}, {"coordinates", json::array({ring_json(poly.ring)})}};
    }
    features.push_back({{"type", "Feature"}, {"properties", props}, {"geometry", geometry}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

Region region_from_geojson(const json& document) {
  if (!document.is_object()) throw Error("region must be a GeoJSON object");
  const auto type = document.value("type", "");
  if (type == "Feature") {
    if (!document.contains("geometry")) throw Error("region feature has no geometry");
    return region_from_geojson(document["geometry"]);
  }
  if (type == "FeatureCollection") {
    std::vector<Ring> rings;
    for (const auto& f : document.value("features", json::array())) {
      auto r = region_from_geojson(f);
      for (auto& ring : r.rings) rings.push_back(std::move(ring));
    }
    return Region::from_rings(std::move(rings));
  }
  if (type == "Polygon") return Region::from_ring(parse_polygon_outer(document.value("coordinates", json())));
  if (type == "MultiPolygon") {
    std::vector<Ring> rings;
    for (const auto& poly : document.value("coordinates", json::array()))
      rings.push_back(parse_polygon_outer(poly));
    return Region::from_rings(std::move(rings));
  }
  throw Error("region must be a Polygon, MultiPolygon, Feature or FeatureCollection");
}

Region region_from_json_rings(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw Error("region is not valid JSON");
  }
  if (!j.is_array() || j.empty()) throw Error("region must be a non-empty array");
  // A single ring is [[lon,lat],...]; several rings add one nesting level.
  bool nested = j[0].is_array() && !j[0].empty() && j[0][0].is_array();
  std::vector<Ring> rings;
  if (nested) {
    for (const auto& r : j) rings.push_back(parse_ring(r));
  } else {
    rings.push_back(parse_ring(j));
  }
  return Region::from_rings(std::move(rings));
}

}  // namespace crowdlens
