#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crowdlens/expr.hpp"
#include "crowdlens/model.hpp"
#include "crowdlens/sample_csv.hpp"

namespace fixtures {

using namespace crowdlens;

inline Place point_place(std::string id, double lon, double lat, std::optional<double> capacity = std::nullopt) {
  return Place{id, id, LonLat{lon, lat}, capacity};
}

/// `n` point places with ids p000.. scattered over [0,10]².
inline std::vector<Place> random_places(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  std::vector<Place> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03zu", i);
    out.push_back(point_place(id, coord(rng), coord(rng), 10.0 + static_cast<double>(i)));
  }
  return out;
}

inline MetricDef base_metric(std::string id, double cap = 100.0) { return MetricDef{id, id, "", cap, std::nullopt}; }
inline MetricDef derived_metric(std::string id, std::string expr, double cap = 1.0) {
  return MetricDef{id, id, "", cap, std::move(expr)};
}

/// Samples with random places, a shared time grid, and some duplicate keys.
inline std::vector<Sample> random_samples(std::mt19937_64& rng, const std::vector<Place>& places,
                                          const std::vector<std::string>& metrics, std::size_t count,
                                          std::size_t timestamps, Timestamp start = Timestamp(1'600'000'000)) {
  std::uniform_int_distribution<std::size_t> pick_place(0, places.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_metric(0, metrics.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(0, timestamps - 1);
  std::uniform_real_distribution<double> val(0.0, 1000.0);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back({places[pick_place(rng)].id, start + Duration(300 * static_cast<std::int64_t>(pick_t(rng))),
                   metrics[pick_metric(rng)], std::round(val(rng) * 100.0) / 100.0});
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / ("crowdlens-" + name + "-" + std::to_string(rng() % 1000000));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text);
}

inline std::string file_text(const std::filesystem::path& path) { return read_file(path); }

}  // namespace fixtures
