#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/expr.hpp"
#include "crowdlens/model.hpp"

namespace crowdlens {

enum class SourceKind { Historical, Realtime, Places };

std::string_view to_string(SourceKind kind);
std::optional<SourceKind> parse_source_kind(std::string_view text);

inline constexpr Duration kDefaultStaleness{600};

struct SourceDescriptor {
  std::string name;
  SourceKind kind = SourceKind::Historical;
  std::string driver;
  std::map<std::string, std::string, std::less<>> params;
  std::vector<std::string> metrics;
  std::optional<Duration> staleness;
  /// Directory relative paths in params resolve against.
  std::filesystem::path base_dir;

  /// Throws ConfigError naming the source and key.
  const std::string& param(std::string_view key) const;
  std::optional<std::string> optional_param(std::string_view key) const;
  double number_param(std::string_view key, std::optional<double> fallback = std::nullopt) const;
  std::filesystem::path path_param(std::string_view key) const;

  /// Explicit staleness, else twice `cadence_s`, else kDefaultStaleness.
  Duration effective_staleness() const;

  bool operator==(const SourceDescriptor&) const = default;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path auth_store = "keys.db";
  std::optional<std::filesystem::path> snapshot;
  std::optional<std::filesystem::path> log_file;
  std::chrono::milliseconds heartbeat{15000};
  std::size_t subscriber_buffer = 256;
  bool operator==(const ServiceSettings&) const = default;
};

struct AppConfig {
  std::vector<SourceDescriptor> sources;
  std::vector<MetricDef> metric_defs;
  std::vector<std::string> evaluation_order;
  ServiceSettings service;
  std::filesystem::path base_dir;

  /// Throws ConfigError.
  const SourceDescriptor& source(std::string_view name) const;
  MetricCatalog catalog() const { return MetricCatalog(metric_defs); }

  /// Largest staleness among sources supplying the metric (for derived
  /// metrics, supplying any of its base dependencies).
  Duration staleness_for(std::string_view metric_id) const;

  bool operator==(const AppConfig&) const = default;
};

/// JSON document. Validation is all-or-nothing: expressions are parsed, the
/// metric graph resolved and every source checked against the driver
/// registry. Errors are ConfigError with a location such as
/// `sources[2].driver`.
AppConfig load_config(const std::filesystem::path& path);
AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);

/// True for parameter names that carry credentials.
bool is_secret_param(std::string_view key);
std::map<std::string, std::string, std::less<>> redacted(
    const std::map<std::string, std::string, std::less<>>& params);

}  // namespace crowdlens
