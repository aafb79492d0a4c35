#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/analytics.hpp"
#include "crowdlens/model.hpp"

namespace crowdlens {

enum class Preset { LisbonFestival, RirWeekend, MelbourneNye };

std::optional<Preset> parse_preset(std::string_view name);
std::string_view preset_name(Preset preset);

/// A generated case study: places, metric definitions and samples, plus the
/// ground truth the generator built into the data.
struct Scenario {
  Preset preset = Preset::MelbourneNye;
  std::uint64_t seed = 0;
  std::vector<Place> places;
  std::vector<MetricDef> metrics;
  std::vector<Sample> samples;
  Timestamp start;
  Timestamp end;
  Duration cadence{600};
  std::string headline_metric;

  /// Whole-map instant and total injected by the generator (melbourne-nye).
  std::optional<Peak> injected_peak;
  /// Region of interest and the instant the generator made its maximum.
  std::optional<Region> focus_region;
  std::string focus_name;
  std::optional<Timestamp> focus_peak_time;
};

/// Deterministic in (preset, seed).
///
/// - lisbon-festival: 200 m grid cells around the Baixa plus an airport cell,
///   5-minute cadence, 8-14 June 2022; whole-map maximum on 9 June, festival
///   region (Avenida + Alfama) maximum at 2022-06-13T00:00Z.
/// - rir-weekend: 200 m grid around Parque da Bela Vista, 5-minute cadence,
///   18-27 June 2022; four evening humps in the park on the 18th, 19th, 25th
///   and 26th, the second weekend higher, maximum at 2022-06-26T23:30Z.
/// - melbourne-nye: 93 point sensors, 10-minute cadence, 30 Dec 2022 to
///   1 Jan 2023; whole-map total of exactly 75000 at 2022-12-31T22:00Z and a
///   next-day maximum below 30000.
Scenario generate_scenario(Preset preset, std::uint64_t seed);

/// Writes places.geojson, samples.csv, config.json and, when the scenario
/// has a focus region, region.geojson into `out_dir` (created if needed).
/// Files are staged under temporary names and renamed only after every one
/// was written; on failure nothing is left behind.
std::vector<std::filesystem::path> write_scenario(const Scenario& scenario,
                                                  const std::filesystem::path& out_dir);

}  // namespace crowdlens
