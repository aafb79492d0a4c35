#include "crowdlens/service.hpp"

#include <algorithm>
#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "crowdlens/analytics.hpp"

namespace crowdlens {
namespace {

std::string sse_event(std::string_view event, std::string_view data) {
  std::string out;
  out.reserve(event.size() + data.size() + 16);
  out.append("event: ").append(event).append("\ndata: ").append(data).append("\n\n");
  return out;
}

std::string close_event(CloseReason reason) {
  return sse_event("close", nlohmann::json{{"reason", to_string(reason)}}.dump());
}

std::optional<std::string> header_key(const httplib::Request& req) {
  if (!req.has_header(std::string(kApiKeyHeader))) return std::nullopt;
  return req.get_header_value(std::string(kApiKeyHeader));
}

void write_response(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

std::vector<std::string> affected_metrics(const MetricCatalog& catalog, std::span<const Sample> batch) {
  std::set<std::size_t> touched;
  for (const auto& s : batch) {
    auto idx = catalog.find(s.metric_id);
    if (!idx || touched.contains(*idx)) continue;
    touched.insert(*idx);
    for (auto d : catalog.dependents_of(*idx)) touched.insert(d);
  }
  std::vector<std::string> out;
  for (const auto& id : catalog.evaluation_order())
    if (touched.contains(catalog.index_of(id))) out.push_back(id);
  return out;
}

LiveIngest::LiveIngest(Store& store, FrameHub& hub, StalenessFn staleness)
    : store_(store), hub_(hub), staleness_(std::move(staleness)) {}

LiveIngest::~LiveIngest() { stop(); }

void LiveIngest::start(const SourceDescriptor& source) { start(realtime_subscribe(source), source.name); }

void LiveIngest::start(std::unique_ptr<SampleStream> stream, std::string name) {
  std::lock_guard lock(mutex_);
  threads_.emplace_back([this, s = std::move(stream), n = std::move(name)](std::stop_token st) mutable {
    run(st, std::move(s), std::move(n));
  });
}

void LiveIngest::run(std::stop_token stop, std::unique_ptr<SampleStream> stream, std::string name) {
  spdlog::info("realtime source '{}' started", name);
  try {
    while (auto batch = stream->next(stop)) {
      try {
        store_.upsert(batch->samples);
      } catch (const IntegrityError& e) {
        ++failures_;
        spdlog::warn("realtime source '{}': batch at {} rejected: {}", name, batch->t.iso(), e.what());
        continue;
      }
      ++batches_;
      for (const auto& metric : affected_metrics(store_.metrics(), batch->samples)) {
        Duration staleness = staleness_ ? staleness_(metric) : kDefaultStaleness;
        hub_.publish(frame_at(store_, metric, batch->t, staleness));
      }
    }
    spdlog::info("realtime source '{}' ended", name);
  } catch (const std::exception& e) {
    ++failures_;
    spdlog::error("realtime source '{}' failed: {}", name, e.what());
  }
}

void LiveIngest::join() {
  std::vector<std::jthread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
}

void LiveIngest::stop() {
  {
    std::lock_guard lock(mutex_);
    for (auto& t : threads_) t.request_stop();
  }
  join();
}

HttpServer::HttpServer(const Api& api, FrameHub& hub, const KeyStore& keys, const MetricCatalog& metrics,
                       ServerOptions options)
    : api_(api),
      hub_(hub),
      keys_(keys),
      metrics_(metrics),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  const std::size_t workers = std::max<std::size_t>(options_.worker_threads, 2);
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };

  // Paths only: query strings may carry a key.
  server_->set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} {}", req.method, req.path, res.status);
  });

  server_->Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
    // EventSource cannot send headers, so the stream also takes ?api_key=.
    auto token = header_key(req);
    if (!token && req.has_param("api_key")) token = req.get_param_value("api_key");
    auto key_id = api_.authenticate(token);
    if (!key_id) return write_response(res, Api::unauthorized());
    std::string metric = req.get_param_value("metric");
    if (metric.empty()) return write_response(res, Api::error(400, "missing_param", "parameter 'metric' is required"));
    if (!metrics_.find(metric))
      return write_response(res, Api::error(400, "unknown_metric", "unknown metric '" + metric + "'"));

    spdlog::info("stream opened by {} for '{}'", *key_id, metric);
    auto sub = hub_.subscribe(metric);
    auto done = std::make_shared<bool>(false);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, sub, done, id = *key_id](std::size_t, httplib::DataSink& sink) {
          if (*done) {
            sink.done();
            return true;
          }
          auto ev = sub->wait_next(options_.heartbeat);
          std::string chunk;
          if (!keys_.is_active(id)) {
            sub->close(CloseReason::Revoked);
            chunk = close_event(CloseReason::Revoked);
            *done = true;
          } else if (ev.kind == HubEvent::Kind::Frame) {
            chunk = sse_event("frame", to_json(*ev.frame).dump());
          } else if (ev.kind == HubEvent::Kind::Idle) {
            chunk = sse_event("ping", "{}");
          } else {
            chunk = close_event(ev.reason);
            *done = true;
          }
          if (!sink.is_writable() || !sink.write(chunk.data(), chunk.size())) return false;
          return true;
        },
        [this, sub, id = *key_id](bool) {
          hub_.unsubscribe(sub);
          spdlog::info("stream closed for {} ({})", id, to_string(sub->reason()));
        });
  });

  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.insert_or_assign(k, v);
    r.api_key = header_key(req);
    auto out = api_.handle(r);
    if (out.key_id) spdlog::info("authorized {} for {}", *out.key_id, req.path);
    write_response(res, out);
  };
  server_->Get(R"(/api/.*)", handler);
  server_->Post(R"(/api/.*)", handler);
}

int HttpServer::bind() {
  if (options_.port == 0)
    port_ = server_->bind_to_any_port(options_.host);
  else
    port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
  if (port_ <= 0)
    throw IoError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port_;
}

void HttpServer::run() { server_->listen_after_bind(); }

int HttpServer::start() {
  int port = bind();
  thread_ = std::thread([this] { run(); });
  server_->wait_until_ready();
  return port;
}

void HttpServer::stop() {
  hub_.close_all(CloseReason::Shutdown);
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::size_t load_history(Store& store, const AppConfig& config) {
  const Timestamp from = Timestamp::from_civil(1970, 1, 1);
  const Timestamp to = Timestamp::from_civil(2100, 1, 1);
  std::size_t total = 0;
  for (const auto& src : config.sources) {
    if (src.kind != SourceKind::Historical) continue;
    auto samples = historical_load(src, {}, from, to);
    total += store.upsert(samples);
    spdlog::info("historical source '{}': {} samples", src.name, samples.size());
  }
  return total;
}

Service::Service(AppConfig config) : config_(std::move(config)), hub_(config_.service.subscriber_buffer) {
  store_ = std::make_unique<Store>(load_all_places(config_), config_.catalog());
  if (config_.service.snapshot && std::filesystem::exists(*config_.service.snapshot)) {
    auto stats = store_->load_snapshot(*config_.service.snapshot);
    spdlog::info("snapshot restored: {} samples", stats.sample_count);
  }
  load_history(*store_, config_);
  keys_ = std::make_unique<KeyStore>(config_.service.auth_store);
  auto staleness = [this](std::string_view metric) { return config_.staleness_for(metric); };
  api_ = std::make_unique<Api>(*store_, *keys_, staleness);
  ServerOptions opts;
  opts.host = config_.service.host;
  opts.port = config_.service.port;
  opts.heartbeat = config_.service.heartbeat;
  server_ = std::make_unique<HttpServer>(*api_, hub_, *keys_, store_->metrics(), opts);
  ingest_ = std::make_unique<LiveIngest>(*store_, hub_, staleness);
}

Service::~Service() { stop(); }

int Service::start() {
  int port = server_->start();
  spdlog::info("listening on {}:{}", config_.service.host, port);
  for (const auto& src : config_.sources)
    if (src.kind == SourceKind::Realtime) ingest_->start(src);
  return port;
}

void Service::stop() {
  if (stopped_) return;
  stopped_ = true;
  ingest_->stop();
  server_->stop();
  if (config_.service.snapshot) {
    store_->save_snapshot(*config_.service.snapshot);
    spdlog::info("snapshot saved to {}", config_.service.snapshot->string());
  }
}

}  // namespace crowdlens
