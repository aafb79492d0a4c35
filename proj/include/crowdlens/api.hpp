#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "crowdlens/analytics.hpp"
#include "crowdlens/keystore.hpp"
#include "crowdlens/store.hpp"

namespace crowdlens {

inline constexpr std::string_view kApiKeyHeader = "X-Api-Key";

struct ApiRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string, std::less<>> query;
  /// Value of the X-Api-Key header, if sent.
  std::optional<std::string> api_key;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  /// Authenticated key id, for access logging.
  std::optional<std::string> key_id;
};

nlohmann::json to_json(const Frame& frame);
nlohmann::json to_json(const Series& series);
nlohmann::json to_json(const Peak& peak, std::string_view metric_id);
nlohmann::json to_json(const MetricDef& def);
nlohmann::json timeline_json(const Series& sums, std::span<const HueStop> stops);

using StalenessFn = std::function<Duration(std::string_view metric_id)>;

/// JSON view over a store. Every route except the push channel is served
/// here; responses depend only on store state and request parameters.
class Api {
 public:
  Api(const Store& store, const KeyStore& keys, StalenessFn staleness = {});

  ApiResponse handle(const ApiRequest& request) const;

  /// Key id for a valid, unrevoked token; nullopt otherwise.
  std::optional<std::string> authenticate(const std::optional<std::string>& token) const;

  /// The single 401 response every authentication failure gets.
  static ApiResponse unauthorized();
  static ApiResponse error(int status, std::string_view code, std::string_view message);

  Duration staleness_for(std::string_view metric_id) const;

 private:
  ApiResponse places() const;
  ApiResponse metrics() const;
  ApiResponse frames(const ApiRequest& r) const;
  ApiResponse series(const ApiRequest& r) const;
  ApiResponse timeline(const ApiRequest& r) const;
  ApiResponse peak_route(const ApiRequest& r) const;

  const Store& store_;
  const KeyStore& keys_;
  StalenessFn staleness_;
};

}  // namespace crowdlens
