#include <doctest.h>

#include <future>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "crowdlens/api.hpp"
#include "crowdlens/error.hpp"
#include "crowdlens/keystore.hpp"
#include "crowdlens/sample_csv.hpp"
#include "crowdlens/service.hpp"
#include "fixtures.hpp"
#include "sse_client.hpp"

using namespace crowdlens;
using namespace fixtures;
using nlohmann::json;

namespace {

const Timestamp T0 = Timestamp::parse("2022-06-13T20:00:00Z");

struct World {
  std::filesystem::path dir = temp_dir("svc");
  Store store{{point_place("a", 0.5, 0.5, 10.0), point_place("b", 5, 5, 20.0), point_place("c", 6, 6)},
              MetricCatalog({base_metric("roaming"), base_metric("total"), base_metric("dwell"),
                             derived_metric("density", "roaming / capacity")})};
  KeyStore keys{dir / "keys.db"};
  IssuedKey key = keys.add("tests");
  Api api{store, keys};

  World() {
    // Whole-map roaming sums of 10, 20, 30.
    store.upsert(std::vector<Sample>{{"a", T0, "roaming", 4},
                                     {"b", T0, "roaming", 6},
                                     {"a", T0 + Duration(600), "roaming", 20},
                                     {"a", T0 + Duration(1200), "roaming", 10},
                                     {"c", T0 + Duration(1200), "roaming", 20}});
  }
  ~World() { std::filesystem::remove_all(dir); }

  ApiResponse get(const std::string& path, std::map<std::string, std::string, std::less<>> query = {}) {
    return api.handle({"GET", path, std::move(query), key.token()});
  }
};

json body(const ApiResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("keystore persists only salted hashes") {
  auto dir = temp_dir("keys");
  std::string secret, id;
  {
    KeyStore ks(dir / "keys.db");
    auto k = ks.add("ops");
    secret = k.secret;
    id = k.key_id;
    CHECK(k.token() == id + "." + secret);
    CHECK(ks.authenticate(k.token()) == id);
    CHECK(!ks.authenticate(id + "." + std::string(secret.size(), '0')));
    CHECK(!ks.authenticate(id));
    CHECK(!ks.authenticate("kdeadbeef." + secret));
    CHECK(!ks.authenticate(""));
    auto second = ks.add("ops");
    CHECK(second.key_id != id);
    CHECK(second.secret != secret);
    for (const auto& rec : ks.list()) {
      CHECK(rec.secret_hash.find(secret) == std::string::npos);
      CHECK(rec.secret_hash.find(second.secret) == std::string::npos);
    }
  }
  CHECK(file_text(dir / "keys.db").find(secret) == std::string::npos);
  {
    KeyStore again(dir / "keys.db");
    CHECK(again.authenticate(id + "." + secret) == id);
    again.revoke(id);
    CHECK(!again.authenticate(id + "." + secret));
    CHECK(!again.is_active(id));
    CHECK_THROWS_AS(again.revoke("knope"), Error);
    auto listed = again.list();
    REQUIRE(listed.size() == 2);
    for (const auto& rec : listed) CHECK(rec.revoked == (rec.key_id == id));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("api requires a valid key and answers every failure identically") {
  World w;
  auto none = w.api.handle({"GET", "/api/places", {}, std::nullopt});
  auto wrong = w.api.handle({"GET", "/api/places", {}, w.key.key_id + ".nope"});
  auto garbage = w.api.handle({"GET", "/api/places", {}, "garbage"});
  CHECK(none.status == 401);
  CHECK(none.body == wrong.body);
  CHECK(none.body == garbage.body);
  CHECK(none.body.find(w.key.key_id) == std::string::npos);
  auto ok = w.get("/api/places");
  CHECK(ok.status == 200);
  CHECK(ok.key_id == w.key.key_id);
  CHECK(ok.body.find(w.key.secret) == std::string::npos);
  CHECK(body(ok)["features"].size() == 3);

  w.keys.revoke(w.key.key_id);
  CHECK(w.get("/api/places").status == 401);
}

TEST_CASE("api routes") {
  World w;
  auto metrics = body(w.get("/api/metrics"));
  CHECK(metrics.size() == 4);
  CHECK(metrics[3]["derived"] == true);

  auto tl = w.get("/api/timeline", {{"metric", "roaming"}});
  REQUIRE(tl.status == 200);
  std::vector<double> hues, sums;
  auto tj = body(tl);
  for (const auto& s : tj["stops"]) {
    hues.push_back(s["hue"].get<double>());
    sums.push_back(s["sum"].get<double>());
  }
  CHECK(sums == std::vector<double>{10, 20, 30});
  CHECK(hues == std::vector<double>{120, 60, 0});
  CHECK(body(tl)["stops"][2]["color"] == "#ff0000");

  auto pk = body(w.get("/api/peak", {{"metric", "roaming"}}));
  CHECK(pk["t"] == (T0 + Duration(1200)).iso());
  CHECK(pk["value"] == 30.0);

  auto in_square = body(w.get("/api/peak", {{"metric", "roaming"}, {"region", "[[0,0],[1,0],[1,1],[0,1]]"}}));
  CHECK(in_square["value"] == 20.0);
  CHECK(w.get("/api/peak", {{"metric", "roaming"}, {"region", "[[0,0]"}}).status == 400);

  auto series = w.get("/api/series", {{"metrics", "roaming,density"}});
  REQUIRE(series.status == 200);
  CHECK(body(series)["series"].size() == 2);
  auto three = w.get("/api/series", {{"metrics", "roaming,total,dwell"}});
  CHECK(three.status == 400);
  CHECK(body(three)["error"] == "too_many_metrics");
  CHECK(w.get("/api/series", {{"metrics", "roaming"}, {"agg", "median"}}).status == 400);
  auto mean = body(w.get("/api/series", {{"metrics", "roaming"}, {"agg", "mean"}}));
  CHECK(mean["series"][0]["points"][0]["value"] == 5.0);

  auto frames = w.get("/api/frames", {{"metric", "density"}, {"from", T0.iso()}, {"to", (T0 + Duration(1200)).iso()}});
  REQUIRE(frames.status == 200);
  auto fj = body(frames);
  REQUIRE(fj.size() == 3);
  CHECK(fj[0]["values"][0]["value"] == doctest::Approx(0.4));
  CHECK(fj[0]["values"][2]["value"].is_null());

  auto backwards = w.get("/api/frames", {{"metric", "roaming"}, {"from", (T0 + Duration(600)).iso()}, {"to", T0.iso()}});
  CHECK(backwards.status == 400);
  CHECK(body(backwards)["error"] == "bad_range");
  CHECK(w.get("/api/frames", {{"metric", "roaming"}, {"step", "1"}, {"from", "2000-01-01T00:00:00Z"}}).status == 400);
  CHECK(w.get("/api/frames", {{"metric", "ghost"}}).status == 400);
  CHECK(w.get("/api/frames", {{"metric", "roaming"}, {"from", "yesterday"}}).status == 400);
  CHECK(w.get("/api/frames").status == 400);
  CHECK(w.get("/api/timeline", {{"metric", "total"}}).status == 404);
  CHECK(w.get("/api/nowhere").status == 404);
  CHECK(w.api.handle({"POST", "/api/places", {}, w.key.token()}).status == 405);
}

TEST_CASE("affected metrics include derived dependents") {
  MetricCatalog cat({base_metric("roaming"), base_metric("total"), derived_metric("density", "roaming / capacity")});
  std::vector<Sample> batch{{"a", T0, "roaming", 1}};
  CHECK(affected_metrics(cat, batch) == std::vector<std::string>{"roaming", "density"});
  std::vector<Sample> other{{"a", T0, "total", 1}};
  CHECK(affected_metrics(cat, other) == std::vector<std::string>{"total"});
}

TEST_CASE("server streams identical frames to two subscribers and keeps secrets out of logs") {
  std::ostringstream log;
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(log);
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(std::make_shared<spdlog::logger>("test", sink));
  spdlog::set_level(spdlog::level::info);

  World w;
  FrameHub hub;
  ServerOptions opts;
  opts.port = 0;
  opts.heartbeat = std::chrono::milliseconds(200);
  HttpServer server(w.api, hub, w.keys, w.store.metrics(), opts);
  int port = server.start();

  // 12 instants at 10 s cadence, replayed at 60x.
  std::vector<Sample> rows;
  for (int k = 0; k < 12; ++k)
    for (const char* p : {"a", "b", "c"}) rows.push_back({p, T0 + Duration(3600 + 10 * k), "roaming", double(k + p[0])});
  std::ostringstream csv;
  write_sample_csv(csv, rows);
  write_text(w.dir / "live.csv", csv.str());

  auto twelve = [](const std::vector<sse::Event>& ev) { return sse::count(ev, "frame") >= 12; };
  httplib::Headers hdr{{"X-Api-Key", w.key.token()}};
  auto c1 = std::async(std::launch::async, [&] { return sse::read(port, "/api/stream?metric=roaming", hdr, twelve); });
  auto c2 = std::async(std::launch::async, [&] {
    return sse::read(port, "/api/stream?metric=roaming&api_key=" + w.key.token(), {}, twelve);
  });
  for (int i = 0; i < 500 && hub.subscriber_count("roaming") < 2; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(hub.subscriber_count("roaming") == 2);

  LiveIngest ingest(w.store, hub, [](std::string_view) { return Duration(600); });
  SourceDescriptor src{"live", SourceKind::Realtime, "replay", {{"path", "live.csv"}, {"speed", "60"}}, {"roaming"}, {}, w.dir};
  ingest.start(src);
  ingest.join();
  CHECK(ingest.batches() == 12);

  auto e1 = c1.get(), e2 = c2.get();
  std::vector<std::string> f1, f2;
  for (const auto& e : e1)
    if (e.name == "frame") f1.push_back(e.data);
  for (const auto& e : e2)
    if (e.name == "frame") f2.push_back(e.data);
  REQUIRE(f1.size() == 12);
  CHECK(f1 == f2);
  for (std::size_t k = 0; k < 12; ++k) {
    auto expected = to_json(frame_at(w.store, "roaming", T0 + Duration(3600 + 10 * static_cast<int>(k)), Duration(600)));
    CHECK(json::parse(f1[k]) == expected);
  }

  httplib::Client client("127.0.0.1", port);
  auto denied = client.Get("/api/places");
  REQUIRE(denied);
  CHECK(denied->status == 401);
  auto wrong = client.Get("/api/places", {{"X-Api-Key", w.key.key_id + ".bad"}});
  CHECK(wrong->body == denied->body);
  auto allowed = client.Get("/api/places", {{"X-Api-Key", w.key.token()}});
  CHECK(allowed->status == 200);
  auto stream_denied = client.Get("/api/stream?metric=roaming&api_key=" + w.key.key_id + ".bad");
  CHECK(stream_denied->status == 401);
  CHECK(stream_denied->body == denied->body);

  server.stop();
  spdlog::set_default_logger(previous);
  spdlog::set_level(spdlog::level::warn);
  auto text = log.str();
  CHECK(text.find(w.key.secret) == std::string::npos);
  CHECK(text.find("authorized " + w.key.key_id) != std::string::npos);
}

TEST_CASE("idle streams get heartbeats and revocation closes them") {
  World w;
  FrameHub hub;
  ServerOptions opts;
  opts.port = 0;
  opts.heartbeat = std::chrono::milliseconds(100);
  HttpServer server(w.api, hub, w.keys, w.store.metrics(), opts);
  int port = server.start();
  httplib::Headers hdr{{"X-Api-Key", w.key.token()}};

  auto pings = sse::read(port, "/api/stream?metric=roaming", hdr,
                         [](const auto& ev) { return sse::count(ev, "ping") >= 3; });
  CHECK(sse::count(pings, "ping") == 3);

  auto closed = std::async(std::launch::async, [&] {
    return sse::read(port, "/api/stream?metric=density", hdr, [](const auto&) { return false; });
  });
  for (int i = 0; i < 500 && hub.subscriber_count("density") < 1; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  w.keys.revoke(w.key.key_id);
  REQUIRE(closed.wait_for(std::chrono::seconds(10)) == std::future_status::ready);
  auto events = closed.get();
  REQUIRE(!events.empty());
  CHECK(events.back().name == "close");
  CHECK(json::parse(events.back().data)["reason"] == "revoked");

  int status = 0;
  sse::read(port, "/api/stream?metric=ghost", {{"X-Api-Key", w.keys.add("x").token()}},
            [](const auto&) { return true; }, std::chrono::seconds(5), &status);
  CHECK(status == 400);
  server.stop();
}

TEST_CASE("shutdown closes open streams") {
  World w;
  FrameHub hub;
  ServerOptions opts;
  opts.port = 0;
  opts.heartbeat = std::chrono::milliseconds(5000);
  HttpServer server(w.api, hub, w.keys, w.store.metrics(), opts);
  int port = server.start();
  auto reader = std::async(std::launch::async, [&] {
    return sse::read(port, "/api/stream?metric=roaming", {{"X-Api-Key", w.key.token()}},
                     [](const auto&) { return false; });
  });
  for (int i = 0; i < 500 && hub.subscriber_count("roaming") < 1; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  server.stop();
  REQUIRE(reader.wait_for(std::chrono::seconds(10)) == std::future_status::ready);
  auto events = reader.get();
  REQUIRE(!events.empty());
  CHECK(json::parse(events.back().data)["reason"] == "shutdown");
}
