#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crowdlens/api.hpp"
#include "crowdlens/config.hpp"
#include "crowdlens/connectors.hpp"
#include "crowdlens/hub.hpp"
#include "crowdlens/keystore.hpp"
#include "crowdlens/store.hpp"

namespace httplib {
class Server;
}

namespace crowdlens {

/// Metrics whose frames change with `batch`: each base metric it carries plus
/// every derived metric depending on one, in evaluation order.
std::vector<std::string> affected_metrics(const MetricCatalog& catalog, std::span<const Sample> batch);

/// Pulls every realtime source on its own thread, upserts each batch and
/// publishes the resulting frames to the hub.
class LiveIngest {
 public:
  LiveIngest(Store& store, FrameHub& hub, StalenessFn staleness);
  ~LiveIngest();

  void start(const SourceDescriptor& source);
  void start(std::unique_ptr<SampleStream> stream, std::string name);

  /// Blocks until every stream ended on its own.
  void join();
  void stop();

  std::size_t batches() const { return batches_.load(); }
  std::size_t failures() const { return failures_.load(); }

 private:
  void run(std::stop_token stop, std::unique_ptr<SampleStream> stream, std::string name);

  Store& store_;
  FrameHub& hub_;
  StalenessFn staleness_;
  std::mutex mutex_;
  std::vector<std::jthread> threads_;
  std::atomic<std::size_t> batches_{0};
  std::atomic<std::size_t> failures_{0};
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 8080;
  std::chrono::milliseconds heartbeat{15000};
  std::size_t worker_threads = 32;
};

/// HTTP front end: /api/* through Api, plus the /api/stream push channel
/// (`event: frame`, `event: ping`, and a final `event: close` naming the
/// reason when the server ends the channel).
class HttpServer {
 public:
  HttpServer(const Api& api, FrameHub& hub, const KeyStore& keys, const MetricCatalog& metrics,
             ServerOptions options);
  ~HttpServer();

  /// Binds and returns the port. Throws IoError.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void run();
  /// bind() then run() on a background thread; returns the port.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  const Api& api_;
  FrameHub& hub_;
  const KeyStore& keys_;
  const MetricCatalog& metrics_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// The whole runtime assembled from a config: places, store (seeded from
/// the snapshot and historical sources), auth store, hub, API, server and
/// live ingest.
class Service {
 public:
  explicit Service(AppConfig config);
  ~Service();

  Store& store() { return *store_; }
  FrameHub& hub() { return hub_; }
  KeyStore& keys() { return *keys_; }
  const Api& api() const { return *api_; }
  const AppConfig& config() const { return config_; }

  /// Starts the server and the realtime sources; returns the bound port.
  int start();
  void stop();

 private:
  AppConfig config_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<KeyStore> keys_;
  FrameHub hub_;
  std::unique_ptr<Api> api_;
  std::unique_ptr<HttpServer> server_;
  std::unique_ptr<LiveIngest> ingest_;
  bool stopped_ = false;
};

/// Loads every historical source over its full range into the store.
std::size_t load_history(Store& store, const AppConfig& config);

}  // namespace crowdlens
