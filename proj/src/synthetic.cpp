#include "crowdlens/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "crowdlens/sample_csv.hpp"

namespace crowdlens {

std::vector<Spike> parse_spikes(std::string_view text) {
  std::vector<Spike> spikes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    pos = end + 1;
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    auto at = item.find('@');
    auto eq = item.rfind('=');
    if (at == std::string_view::npos || eq == std::string_view::npos || eq < at)
      throw ConfigError("spike '" + std::string(item) + "' must be place@timestamp=magnitude");
    Spike s;
    s.place_id = std::string(item.substr(0, at));
    try {
      s.t = Timestamp::parse(item.substr(at + 1, eq - at - 1));
    } catch (const ParseError&) {
      throw ConfigError("spike '" + std::string(item) + "' has a bad timestamp");
    }
    auto mag = item.substr(eq + 1);
    auto res = std::from_chars(mag.data(), mag.data() + mag.size(), s.magnitude);
    if (res.ec != std::errc() || res.ptr != mag.data() + mag.size() || !std::isfinite(s.magnitude))
      throw ConfigError("spike '" + std::string(item) + "' has a bad magnitude");
    spikes.push_back(std::move(s));
  }
  return spikes;
}

SyntheticParams synthetic_params(const SourceDescriptor& source) {
  SyntheticParams p;
  double seed = source.number_param("seed");
  if (seed < 0) throw ConfigError("source '" + source.name + "': seed must be non-negative");
  p.seed = static_cast<std::uint64_t>(seed);
  try {
    p.start = Timestamp::parse(source.param("start"));
    if (auto e = source.optional_param("end")) p.end = Timestamp::parse(*e);
  } catch (const ParseError& e) {
    throw ConfigError("source '" + source.name + "': " + e.what());
  }
  p.cadence = Duration(static_cast<std::int64_t>(source.number_param("cadence_s")));
  if (p.cadence.count() <= 0) throw ConfigError("source '" + source.name + "': cadence_s must be positive");

  const std::string& places = source.param("places");
  if (places.starts_with("@")) {
    std::filesystem::path path = places.substr(1);
    if (path.is_relative()) path = source.base_dir / path;
    for (const auto& pl : parse_places(read_file(path))) p.place_ids.push_back(pl.id);
  } else {
    std::size_t pos = 0;
    while (pos <= places.size()) {
      auto end = places.find(',', pos);
      if (end == std::string::npos) end = places.size();
      auto id = places.substr(pos, end - pos);
      if (!id.empty()) p.place_ids.push_back(id);
      pos = end + 1;
    }
  }
  if (p.place_ids.empty()) throw ConfigError("source '" + source.name + "': no places");
  p.metric_ids = source.metrics;
  p.base = source.number_param("base", 100.0);
  p.amplitude = source.number_param("amplitude", 0.6);
  p.noise = source.number_param("noise", 0.1);
  if (auto s = source.optional_param("spikes")) p.spikes = parse_spikes(*s);
  return p;
}

SyntheticGenerator::SyntheticGenerator(SyntheticParams params)
    : params_(std::move(params)), rng_(params_.seed), next_grid_(params_.start) {
  if (params_.cadence.count() <= 0) throw ConfigError("synthetic cadence must be positive");
  for (const auto& s : params_.spikes)
    if (std::find(params_.place_ids.begin(), params_.place_ids.end(), s.place_id) == params_.place_ids.end())
      throw ConfigError("spike references unknown place '" + s.place_id + "'");
  std::stable_sort(params_.spikes.begin(), params_.spikes.end(),
                   [](const Spike& a, const Spike& b) { return a.t < b.t; });
  // Skip spikes before the start; they can never be emitted.
  while (next_spike_ < params_.spikes.size() && params_.spikes[next_spike_].t < params_.start) ++next_spike_;
  levels_.reserve(params_.place_ids.size() * params_.metric_ids.size());
  for (std::size_t i = 0; i < params_.place_ids.size() * params_.metric_ids.size(); ++i)
    levels_.push_back(params_.base * (0.5 + rng_.uniform()));
}

SampleBatch SyntheticGenerator::grid_batch(Timestamp t) {
  SampleBatch batch{t, {}};
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t.second_of_day() - 9 * 3600) / 86400.0;
  const double daily = 1.0 + params_.amplitude * std::sin(phase);
  std::size_t k = 0;
  for (const auto& place : params_.place_ids) {
    for (const auto& metric : params_.metric_ids) {
      double jitter = 1.0 + params_.noise * (2.0 * rng_.uniform() - 1.0);
      double v = std::max(0.0, std::round(levels_[k++] * daily * jitter));
      batch.samples.push_back({place, t, metric, v});
    }
  }
  return batch;
}

std::optional<SampleBatch> SyntheticGenerator::next_batch() {
  const bool grid_done = params_.end && next_grid_ > *params_.end;
  const bool spike_pending = next_spike_ < params_.spikes.size() &&
                             (!params_.end || params_.spikes[next_spike_].t <= *params_.end);
  if (grid_done && !spike_pending) return std::nullopt;

  if (spike_pending && (grid_done || params_.spikes[next_spike_].t < next_grid_)) {
    // Off-grid spike instant.
    Timestamp t = params_.spikes[next_spike_].t;
    SampleBatch batch{t, {}};
    for (; next_spike_ < params_.spikes.size() && params_.spikes[next_spike_].t == t; ++next_spike_)
      for (const auto& metric : params_.metric_ids)
        batch.samples.push_back({params_.spikes[next_spike_].place_id, t, metric,
                                 params_.spikes[next_spike_].magnitude});
    return batch;
  }

  SampleBatch batch = grid_batch(next_grid_);
  for (; next_spike_ < params_.spikes.size() && params_.spikes[next_spike_].t == next_grid_; ++next_spike_)
    for (auto& s : batch.samples)
      if (s.place_id == params_.spikes[next_spike_].place_id) s.value = params_.spikes[next_spike_].magnitude;
  next_grid_ = next_grid_ + params_.cadence;
  return batch;
}

std::vector<Sample> synthesize(const SyntheticParams& params) {
  if (!params.end) throw ConfigError("synthetic history needs an end timestamp");
  SyntheticGenerator gen(params);
  std::vector<Sample> out;
  while (auto batch = gen.next_batch())
    for (auto& s : batch->samples) out.push_back(std::move(s));
  return out;
}

}  // namespace crowdlens
