#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/config.hpp"
#include "crowdlens/connectors.hpp"
#include "crowdlens/model.hpp"

namespace crowdlens {

/// Seeded generator whose output depends only on the seed: the engine is
/// fully specified by the standard and the conversion to [0, 1) is ours.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

/// Value forced at (place, t) for every metric of the source. Off-grid
/// instants are emitted as extra batches.
struct Spike {
  std::string place_id;
  Timestamp t;
  double magnitude = 0.0;
  bool operator==(const Spike&) const = default;
};

struct SyntheticParams {
  std::uint64_t seed = 0;
  Timestamp start;
  std::optional<Timestamp> end;  // unbounded when absent
  Duration cadence{600};
  std::vector<std::string> place_ids;
  std::vector<std::string> metric_ids;
  double base = 100.0;      // mean level per place
  double amplitude = 0.6;   // relative daily swing, peak at 15:00 UTC
  double noise = 0.1;       // relative uniform noise
  std::vector<Spike> spikes;
};

/// `place@timestamp=magnitude` entries separated by `;`.
std::vector<Spike> parse_spikes(std::string_view text);

/// Reads seed, start, end, cadence_s, places (comma list, or `@file` naming a
/// places GeoJSON), base, amplitude, noise and spikes. Metrics come from the
/// descriptor.
SyntheticParams synthetic_params(const SourceDescriptor& source);

/// Daily sinusoid per place, plus seeded noise, plus spikes; values rounded
/// to whole counts.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticParams params);
  std::optional<SampleBatch> next_batch();

 private:
  SampleBatch grid_batch(Timestamp t);

  SyntheticParams params_;
  SeededRng rng_;
  std::vector<double> levels_;  // per (place, metric)
  Timestamp next_grid_;
  std::size_t next_spike_ = 0;
};

std::vector<Sample> synthesize(const SyntheticParams& params);

}  // namespace crowdlens
