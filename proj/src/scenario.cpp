#include "crowdlens/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "crowdlens/sample_csv.hpp"
#include "crowdlens/synthetic.hpp"

namespace crowdlens {

using nlohmann::json;

std::optional<Preset> parse_preset(std::string_view name) {
  if (name == "lisbon-festival") return Preset::LisbonFestival;
  if (name == "rir-weekend") return Preset::RirWeekend;
  if (name == "melbourne-nye") return Preset::MelbourneNye;
  return std::nullopt;
}

std::string_view preset_name(Preset preset) {
  switch (preset) {
    case Preset::LisbonFestival: return "lisbon-festival";
    case Preset::RirWeekend: return "rir-weekend";
    case Preset::MelbourneNye: return "melbourne-nye";
  }
  return "unknown";
}

namespace {

constexpr double kMetresPerDegreeLat = 111320.0;

double hour_of_day(Timestamp t) { return static_cast<double>(t.second_of_day()) / 3600.0; }

double minutes_between(Timestamp a, Timestamp b) { return static_cast<double>((a - b).count()) / 60.0; }

std::string cell_id(const char* prefix, int col, int row) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02d_%02d", prefix, row, col);
  return buf;
}

/// Axis-aligned cell of `size_m` metres with south-west corner at grid
/// position (col, row) from the origin.
struct Grid {
  double lon0, lat0, size_m;

  double dlat() const { return size_m / kMetresPerDegreeLat; }
  double dlon() const { return size_m / (kMetresPerDegreeLat * std::cos(lat0 * std::numbers::pi / 180.0)); }

  Ring cell(int col, int row) const { return block(col, row, col + 1, row + 1); }

  /// Rectangle covering cells [c0, c1) x [r0, r1).
  Ring block(int c0, int r0, int c1, int r1) const {
    double w = lon0 + c0 * dlon(), e = lon0 + c1 * dlon();
    double s = lat0 + r0 * dlat(), n = lat0 + r1 * dlat();
    return {{w, s}, {e, s}, {e, n}, {w, n}, {w, s}};
  }
};

/// Splits `total` into non-negative integers proportional to `weights` that
/// sum to exactly `total` (largest remainder).
std::vector<double> apportion(double total, const std::vector<double>& weights) {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  double assigned = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = total * weights[i] / wsum;
    out[i] = std::floor(exact);
    assigned += out[i];
    remainders.emplace_back(exact - out[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  auto left = static_cast<std::size_t>(std::llround(total - assigned));
  for (std::size_t k = 0; k < left && k < remainders.size(); ++k) out[remainders[k].second] += 1.0;
  return out;
}

double jitter(SeededRng& rng, double rel) { return 1.0 + rel * (2.0 * rng.uniform() - 1.0); }

/// Lisbon mobile-network style metrics shared by the two Lisbon presets.
std::vector<MetricDef> lisbon_metrics() {
  return {
      {"total", "Devices detected", "devices", 5000.0, std::nullopt},
      {"roaming", "Roaming devices", "devices", 2000.0, std::nullopt},
      {"dwell", "Mean dwell time", "minutes", 60.0, std::nullopt},
      {"density", "Device density", "devices per capacity", 1.0, "total / capacity"},
      {"roaming_density", "Roaming density", "devices per capacity", 0.5, "roaming / capacity"},
  };
}

struct Hump {
  Timestamp peak;
  double amplitude;
  double decay_min;
  double window_min;

  double at(Timestamp t) const {
    double dt = std::abs(minutes_between(t, peak));
    return dt > window_min ? 0.0 : amplitude * std::exp(-dt / decay_min);
  }
};

/// Per-cell samples for the Lisbon presets. `extra_share[c]` is the share of
/// the event humps cell c receives (0 outside the event area).
void lisbon_samples(Scenario& sc, SeededRng& rng, const std::vector<double>& levels,
                    const std::vector<double>& dwell_base, const std::vector<double>& extra_share,
                    const std::vector<Hump>& humps, const std::function<double(std::size_t, Timestamp)>& factor,
                    double event_dwell) {
  for (Timestamp t = sc.start; t <= sc.end; t = t + sc.cadence) {
    double h = hour_of_day(t);
    double diurnal = 0.35 + 0.65 * std::exp(-std::pow((h - 15.0) / 5.0, 2));
    double hump = 0.0;
    for (const auto& e : humps) hump += e.at(t);
    for (std::size_t c = 0; c < sc.places.size(); ++c) {
      double base = levels[c] * diurnal * factor(c, t);
      double extra = hump * extra_share[c];
      double total = std::round((base + extra) * jitter(rng, 0.02));
      double event_frac = (base + extra) > 0 ? extra / (base + extra) : 0.0;
      double roaming = std::round(total * (0.12 + 0.25 * event_frac) * jitter(rng, 0.05));
      double dwell = (dwell_base[c] * (1.0 - event_frac) + event_dwell * event_frac) * jitter(rng, 0.03);
      dwell = std::round(dwell * 10.0) / 10.0;
      const auto& id = sc.places[c].id;
      sc.samples.push_back({id, t, "total", total});
      sc.samples.push_back({id, t, "roaming", roaming});
      sc.samples.push_back({id, t, "dwell", dwell});
    }
  }
}

Scenario make_rir(std::uint64_t seed) {
  Scenario sc;
  sc.preset = Preset::RirWeekend;
  sc.seed = seed;
  sc.start = Timestamp::from_civil(2022, 6, 18);
  sc.end = Timestamp::from_civil(2022, 6, 27, 23, 55);
  sc.cadence = Duration(300);
  sc.headline_metric = "total";
  sc.metrics = lisbon_metrics();
  SeededRng rng(seed ^ 0x52494e52494fULL);

  Grid grid{-9.1190, 38.7545, 200.0};
  const int cols = 6, rows = 6;
  auto in_park = [](int c, int r) { return c >= 1 && c < 4 && r >= 2 && r < 5; };
  std::vector<double> levels, dwell_base, share;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      bool park = in_park(c, r);
      Place p;
      p.id = cell_id("bv", c, r);
      p.name = park ? "Parque da Bela Vista " + std::to_string(r) + "/" + std::to_string(c)
                    : "Bela Vista " + std::to_string(r) + "/" + std::to_string(c);
      p.geometry = PolygonGeometry{grid.cell(c, r)};
      p.capacity = park ? 6000.0 : std::round(rng.uniform(800.0, 2500.0));
      sc.places.push_back(std::move(p));
      levels.push_back(rng.uniform(200.0, 600.0));
      dwell_base.push_back(rng.uniform(25.0, 45.0));
      share.push_back(park ? rng.uniform(0.8, 1.2) : 0.0);
    }
  double share_sum = std::accumulate(share.begin(), share.end(), 0.0);
  for (auto& s : share) s /= share_sum;

  const Timestamp top = Timestamp::from_civil(2022, 6, 26, 23, 30);
  std::vector<Hump> humps{
      {Timestamp::from_civil(2022, 6, 18, 22, 30), 14000.0, 75.0, 480.0},
      {Timestamp::from_civil(2022, 6, 19, 22, 0), 15000.0, 75.0, 480.0},
      {Timestamp::from_civil(2022, 6, 25, 23, 0), 20000.0, 75.0, 480.0},
      {top, 24000.0, 75.0, 480.0},
  };
  lisbon_samples(sc, rng, levels, dwell_base, share, humps, [](std::size_t, Timestamp) { return 1.0; }, 8.5);

  sc.focus_region = Region::from_ring(grid.block(1, 2, 4, 5));
  sc.focus_name = "Parque da Bela Vista";
  sc.focus_peak_time = top;
  return sc;
}

Scenario make_lisbon(std::uint64_t seed) {
  Scenario sc;
  sc.preset = Preset::LisbonFestival;
  sc.seed = seed;
  sc.start = Timestamp::from_civil(2022, 6, 8);
  sc.end = Timestamp::from_civil(2022, 6, 14, 23, 55);
  sc.cadence = Duration(300);
  sc.headline_metric = "total";
  sc.metrics = lisbon_metrics();
  SeededRng rng(seed ^ 0x4c4953424f41ULL);

  Grid grid{-9.1480, 38.7080, 200.0};
  const int cols = 8, rows = 6;
  auto avenida = [](int c, int r) { return c == 2 && r >= 2; };
  auto alfama = [](int c, int r) { return c >= 6 && r >= 1 && r < 3; };
  auto office = [](int c, int r) { return c < 2 && r >= 4; };

  std::vector<double> levels, dwell_base, share;
  std::vector<bool> office_cell;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Place p;
      p.id = cell_id("lx", c, r);
      std::string zone = avenida(c, r) ? "Avenida da Liberdade" : alfama(c, r) ? "Alfama" : office(c, r) ? "Offices" : "Lisboa";
      p.name = zone + " " + std::to_string(r) + "/" + std::to_string(c);
      p.geometry = PolygonGeometry{grid.cell(c, r)};
      p.capacity = std::round(rng.uniform(1200.0, 3000.0));
      sc.places.push_back(std::move(p));
      levels.push_back(rng.uniform(200.0, 700.0));
      dwell_base.push_back(rng.uniform(25.0, 45.0));
      share.push_back(avenida(c, r) || alfama(c, r) ? rng.uniform(0.8, 1.2) : 0.0);
      office_cell.push_back(office(c, r));
    }
  Grid airport_grid{-9.1350, 38.7740, 200.0};
  sc.places.push_back({"lx_airport", "Aeroporto", PolygonGeometry{airport_grid.cell(0, 0)}, 4000.0});
  levels.push_back(rng.uniform(500.0, 700.0));
  dwell_base.push_back(rng.uniform(30.0, 50.0));
  share.push_back(0.0);
  office_cell.push_back(true);

  double share_sum = std::accumulate(share.begin(), share.end(), 0.0);
  for (auto& s : share) s /= share_sum;

  // 8 Wed, 9 Thu (eve of the long weekend), 10 Fri holiday, 11-12 weekend,
  // 13 Mon municipal holiday, 14 Tue.
  auto day_factor = [](Timestamp t) {
    switch ((t.epoch_seconds() - Timestamp::from_civil(2022, 6, 8).epoch_seconds()) / 86400) {
      case 0: return 1.0;
      case 1: return 1.3;
      case 2: return 0.75;
      case 3: return 0.7;
      case 4: return 0.7;
      case 5: return 0.75;
      default: return 1.0;
    }
  };
  auto working_day = [](Timestamp t) {
    auto day = (t.epoch_seconds() - Timestamp::from_civil(2022, 6, 8).epoch_seconds()) / 86400;
    return day == 0 || day == 1 || day == 6;
  };
  auto factor = [&](std::size_t c, Timestamp t) {
    double f = day_factor(t);
    if (office_cell[c]) f *= working_day(t) ? 2.0 : 0.5;
    return f;
  };

  const Timestamp top = Timestamp::from_civil(2022, 6, 13);
  std::vector<Hump> humps{{top, 16000.0, 60.0, 360.0}};
  lisbon_samples(sc, rng, levels, dwell_base, share, humps, factor, 15.0);

  sc.focus_region = Region::from_rings({grid.block(2, 2, 3, 6), grid.block(6, 1, 8, 3)});
  sc.focus_name = "Avenida da Liberdade + Alfama";
  sc.focus_peak_time = top;
  return sc;
}

Scenario make_melbourne(std::uint64_t seed) {
  Scenario sc;
  sc.preset = Preset::MelbourneNye;
  sc.seed = seed;
  sc.start = Timestamp::from_civil(2022, 12, 30);
  sc.end = Timestamp::from_civil(2023, 1, 1, 23, 50);
  sc.cadence = Duration(600);
  sc.headline_metric = "pedestrians";
  sc.metrics = {
      {"pedestrians", "Pedestrians", "persons / 10 min", 2000.0, std::nullopt},
      {"density", "Pedestrian density", "persons per capacity", 1.5, "pedestrians / capacity"},
  };
  SeededRng rng(seed ^ 0x4d454c424e59ULL);

  constexpr int kSensors = 93;
  std::vector<double> weights;
  for (int i = 1; i <= kSensors; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "mel_%03d", i);
    Place p;
    p.id = id;
    p.name = "Pedestrian sensor " + std::to_string(i);
    p.geometry = LonLat{rng.uniform(144.955, 144.975), rng.uniform(-37.822, -37.808)};
    p.capacity = std::round(rng.uniform(300.0, 1200.0));
    sc.places.push_back(std::move(p));
    weights.push_back(rng.uniform(0.5, 1.5));
  }
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);

  const Timestamp spike = Timestamp::from_civil(2022, 12, 31, 22, 0);
  const double spike_total = 75000.0;
  constexpr double kEveningCrowd = 50000.0;

  for (Timestamp t = sc.start; t <= sc.end; t = t + sc.cadence) {
    std::vector<double> noisy(kSensors);
    for (int i = 0; i < kSensors; ++i) noisy[i] = weights[i] * jitter(rng, 0.06);
    std::vector<double> values;
    if (t == spike) {
      values = apportion(spike_total, noisy);
    } else {
      double h = hour_of_day(t);
      double total = 3000.0 + 15000.0 * std::exp(-std::pow((h - 13.5) / 4.0, 2));
      total += kEveningCrowd * std::exp(-std::pow(minutes_between(t, spike) / 80.0, 2));
      for (int i = 0; i < kSensors; ++i) values.push_back(std::round(total * noisy[i] / wsum));
    }
    for (int i = 0; i < kSensors; ++i) sc.samples.push_back({sc.places[i].id, t, "pedestrians", values[i]});
  }
  sc.injected_peak = Peak{spike, spike_total};
  return sc;
}

json region_geojson(const Region& region) {
  auto ring_json = [](const Ring& ring) {
    json r = json::array();
    for (const auto& p : ring) r.push_back({p.lon, p.lat});
    return r;
  };
  if (region.rings.size() == 1)
    return {{"type", "Polygon"}, {"coordinates", json::array({ring_json(region.rings[0])})}};
  json polys = json::array();
  for (const auto& ring : region.rings) polys.push_back(json::array({ring_json(ring)}));
  return {{"type", "MultiPolygon"}, {"coordinates", polys}};
}

json scenario_config(const Scenario& sc) {
  json metrics = json::array();
  std::vector<std::string> base;
  for (const auto& m : sc.metrics) {
    json j = {{"id", m.id}, {"label", m.label}, {"unit", m.unit}, {"cap", m.cap}};
    if (m.expression) j["expression"] = *m.expression;
    else base.push_back(m.id);
    metrics.push_back(j);
  }
  std::string cadence = std::to_string(sc.cadence.count());
  return {
      {"service", {{"bind", "127.0.0.1:8080"}, {"auth_store", "keys.db"}, {"log_file", "crowdlens.log"}}},
      {"metrics", metrics},
      {"sources",
       json::array({
           {{"name", "places"}, {"kind", "places"}, {"driver", "geojson-file"}, {"params", {{"path", "places.geojson"}}}},
           {{"name", "history"}, {"kind", "historical"}, {"driver", "csv-file"},
            {"params", {{"path", "samples.csv"}, {"cadence_s", cadence}}}, {"metrics", base}},
           {{"name", "live"}, {"kind", "realtime"}, {"driver", "replay"},
            {"params", {{"path", "samples.csv"}, {"cadence_s", cadence}, {"speed", "60"}}}, {"metrics", base}},
       })},
  };
}

}  // namespace

Scenario generate_scenario(Preset preset, std::uint64_t seed) {
  switch (preset) {
    case Preset::LisbonFestival: return make_lisbon(seed);
    case Preset::RirWeekend: return make_rir(seed);
    case Preset::MelbourneNye: return make_melbourne(seed);
  }
  throw Error("unknown preset");
}

std::vector<std::filesystem::path> write_scenario(const Scenario& sc, const std::filesystem::path& out_dir) {
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("places.geojson", places_to_geojson(sc.places).dump(1) + "\n");
  std::ostringstream csv;
  write_sample_csv(csv, sc.samples);
  files.emplace_back("samples.csv", csv.str());
  files.emplace_back("config.json", scenario_config(sc).dump(2) + "\n");
  if (sc.focus_region) {
    json feature = {{"type", "Feature"},
                    {"properties", {{"name", sc.focus_name}}},
                    {"geometry", region_geojson(*sc.focus_region)}};
    files.emplace_back("region.geojson", feature.dump(2) + "\n");
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  std::vector<std::filesystem::path> staged;
  auto cleanup = [&] {
    for (const auto& p : staged) std::filesystem::remove(p, ec);
  };
  try {
    for (const auto& [name, content] : files) {
      auto tmp = out_dir / ("." + name + ".partial");
      staged.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write '" + tmp.string() + "'");
      out << content;
      out.close();
      if (!out) throw IoError("write failure on '" + tmp.string() + "'");
    }
  } catch (...) {
    cleanup();
    throw;
  }
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto dest = out_dir / files[i].first;
    std::filesystem::rename(staged[i], dest, ec);
    if (ec) {
      cleanup();
      throw IoError("cannot rename into '" + dest.string() + "': " + ec.message());
    }
    written.push_back(dest);
  }
  return written;
}

}  // namespace crowdlens
