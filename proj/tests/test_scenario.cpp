#include <doctest.h>

#include <thread>

#include "crowdlens/analytics.hpp"
#include "crowdlens/config.hpp"
#include "crowdlens/connectors.hpp"
#include "crowdlens/hub.hpp"
#include "crowdlens/sample_csv.hpp"
#include "crowdlens/scenario.hpp"
#include "crowdlens/store.hpp"
#include "fixtures.hpp"

using namespace crowdlens;
using namespace fixtures;

namespace {

std::unique_ptr<Store> store_of(const Scenario& sc) {
  auto s = std::make_unique<Store>(sc.places, MetricCatalog(sc.metrics));
  s->upsert(sc.samples);
  return s;
}

Frame frame(const char* metric, std::int64_t t, double v = 1.0) { return Frame{Timestamp(t), metric, {{"a", v}}}; }

}  // namespace

TEST_CASE("scenario presets are deterministic in the seed") {
  for (auto preset : {Preset::LisbonFestival, Preset::RirWeekend, Preset::MelbourneNye}) {
    CAPTURE(preset_name(preset));
    auto a = generate_scenario(preset, 7), b = generate_scenario(preset, 7);
    CHECK(a.samples == b.samples);
    CHECK(a.places == b.places);
    CHECK(generate_scenario(preset, 8).samples != a.samples);
    CHECK(parse_preset(preset_name(preset)) == preset);
  }
  CHECK(!parse_preset("atlantis"));
}

TEST_CASE("melbourne-nye: 93 sensors, 75000 at 22:00, next day below 30000") {
  auto sc = generate_scenario(Preset::MelbourneNye, 7);
  CHECK(sc.places.size() == 93);
  CHECK(sc.cadence == Duration(600));
  auto held = store_of(sc);
  auto& store = *held;
  auto sums = sum_series(store, "pedestrians", sc.start, sc.end);
  auto p = peak(sums);
  CHECK(p.t == Timestamp::parse("2022-12-31T22:00:00Z"));
  CHECK(p.value == 75000.0);
  REQUIRE(sc.injected_peak);
  CHECK(*sc.injected_peak == p);
  auto next_day = peak(sum_series(store, "pedestrians", Timestamp::parse("2023-01-01T00:00:00Z"), sc.end));
  CHECK(next_day.value < 30000.0);
}

TEST_CASE("rir-weekend: park maximum on the 26th at 23:30") {
  auto sc = generate_scenario(Preset::RirWeekend, 7);
  CHECK(sc.cadence == Duration(300));
  REQUIRE(sc.focus_region);
  auto held = store_of(sc);
  auto& store = *held;
  auto p = peak(sum_series(store, "total", sc.start, sc.end, sc.focus_region));
  CHECK(p.t == Timestamp::parse("2022-06-26T23:30:00Z"));
  // Second weekend is higher than the first.
  auto first = peak(sum_series(store, "total", sc.start, Timestamp::parse("2022-06-21T00:00:00Z"), sc.focus_region));
  CHECK(first.value < p.value);
}

TEST_CASE("lisbon-festival: whole map peaks on the 9th, festival area at midnight of the 13th") {
  auto sc = generate_scenario(Preset::LisbonFestival, 7);
  auto held = store_of(sc);
  auto& store = *held;
  auto whole = peak(sum_series(store, "total", sc.start, sc.end));
  CHECK(whole.t >= Timestamp::parse("2022-06-09T00:00:00Z"));
  CHECK(whole.t < Timestamp::parse("2022-06-10T00:00:00Z"));
  REQUIRE(sc.focus_region);
  auto focus = peak(sum_series(store, "total", sc.start, sc.end, sc.focus_region));
  CHECK(focus.t == Timestamp::parse("2022-06-13T00:00:00Z"));
}

TEST_CASE("written scenario loads back through its config") {
  auto dir = temp_dir("scenario");
  auto sc = generate_scenario(Preset::MelbourneNye, 3);
  auto files = write_scenario(sc, dir);
  CHECK(files.size() == 3);
  auto cfg = load_config(dir / "config.json");
  auto places = load_all_places(cfg);
  CHECK(places.size() == 93);
  auto loaded = historical_load(cfg.source("history"), {}, sc.start, sc.end);
  CHECK(loaded == sc.samples);
  std::filesystem::remove_all(dir);
}

TEST_CASE("hub delivers the same ordered sequence to every subscriber") {
  FrameHub hub(64);
  auto a = hub.subscribe("m"), b = hub.subscribe("m"), other = hub.subscribe("n");
  CHECK(hub.subscriber_count("m") == 2);
  for (int i = 0; i < 12; ++i) CHECK(hub.publish(frame("m", 100 * i, i)) == 2);
  CHECK(hub.publish(frame("m", 50)) == 0);  // older than the last frame: dropped
  CHECK(hub.publish(frame("n", 5)) == 1);
  for (int i = 0; i < 12; ++i) {
    auto ea = a->wait_next(std::chrono::milliseconds(10)), eb = b->wait_next(std::chrono::milliseconds(10));
    REQUIRE(ea.kind == HubEvent::Kind::Frame);
    REQUIRE(eb.kind == HubEvent::Kind::Frame);
    CHECK(*ea.frame == *eb.frame);
    CHECK(ea.frame->t == Timestamp(100 * i));
  }
  CHECK(a->wait_next(std::chrono::milliseconds(5)).kind == HubEvent::Kind::Idle);
  CHECK(other->wait_next(std::chrono::milliseconds(5)).frame->metric_id == "n");
}

TEST_CASE("slow subscriber is closed on overflow without affecting others") {
  FrameHub hub(4);
  auto slow = hub.subscribe("m"), fast = hub.subscribe("m");
  for (int i = 0; i < 10; ++i) {
    hub.publish(frame("m", i));
    auto e = fast->wait_next(std::chrono::milliseconds(10));
    CHECK(e.kind == HubEvent::Kind::Frame);
  }
  CHECK(slow->closed());
  CHECK(slow->reason() == CloseReason::Overflow);
  CHECK(slow->wait_next(std::chrono::milliseconds(5)).kind == HubEvent::Kind::Closed);
  CHECK(!fast->closed());
  CHECK(hub.subscriber_count("m") == 1);
  CHECK(to_string(CloseReason::Overflow) == "overflow");
}

TEST_CASE("hub shutdown wakes waiting subscribers") {
  FrameHub hub;
  auto s = hub.subscribe("m");
  std::thread t([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    hub.close_all(CloseReason::Shutdown);
  });
  auto e = s->wait_next(std::chrono::seconds(5));
  t.join();
  CHECK(e.kind == HubEvent::Kind::Closed);
  CHECK(e.reason == CloseReason::Shutdown);
  hub.unsubscribe(s);
  CHECK(hub.subscriber_count("m") == 0);
}
