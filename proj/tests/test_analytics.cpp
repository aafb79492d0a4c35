#include <doctest.h>

#include "crowdlens/analytics.hpp"
#include "crowdlens/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace crowdlens;
using namespace fixtures;

namespace {

const Timestamp T0 = Timestamp::parse("2022-06-13T12:00:00Z");

Region unit_square() { return Region::from_ring({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

Series series_of(std::vector<Value> values) {
  Series s{"m", {}};
  for (std::size_t i = 0; i < values.size(); ++i) s.points.push_back({T0 + Duration(600 * i), values[i]});
  return s;
}

std::vector<double> hues_of(const Series& s) {
  std::vector<double> out;
  for (const auto& h : timeline_hues(s)) out.push_back(h.hue);
  return out;
}

}  // namespace

TEST_CASE("point in polygon examples") {
  auto sq = unit_square();
  CHECK(region_contains(sq, {0.5, 0.5}));
  CHECK(!region_contains(sq, {2, 2}));
  CHECK(region_contains(sq, {0, 0}));
  CHECK(region_contains(sq, {1, 0.5}));
  CHECK(region_contains(sq, {0.5, 1}));
  CHECK(!region_contains(sq, {1.0000001, 0.5}));

  // Concave "C" shape: the notch is outside.
  auto c = Region::from_ring({{0, 0}, {3, 0}, {3, 1}, {1, 1}, {1, 2}, {3, 2}, {3, 3}, {0, 3}});
  CHECK(region_contains(c, {0.5, 1.5}));
  CHECK(!region_contains(c, {2, 1.5}));
  CHECK(region_contains(c, {2, 1}));
}

TEST_CASE("point in convex polygon matches half-plane containment") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> coord(-20, 20);
  int boundary = 0;
  for (int poly = 0; poly < 50; ++poly) {
    std::vector<LonLat> pts;
    for (int i = 0; i < 8; ++i) pts.push_back({double(coord(rng)), double(coord(rng))});
    auto hull = oracle::convex_hull(pts);
    if (hull.size() < 3) continue;
    Ring ring(hull.begin(), hull.end());
    auto region = Region::from_ring(ring);
    std::vector<LonLat> probes;
    for (int i = 0; i < 200; ++i) probes.push_back({coord(rng) + (i % 2) * 0.5, double(coord(rng))});
    for (std::size_t i = 0; i < hull.size(); ++i) {
      auto a = hull[i], b = hull[(i + 1) % hull.size()];
      probes.push_back(a);
      probes.push_back({(a.lon + b.lon) / 2, (a.lat + b.lat) / 2});
    }
    for (auto p : probes) {
      bool want = oracle::convex_contains(hull, p);
      CAPTURE(p.lon);
      CAPTURE(p.lat);
      CHECK(region_contains(region, p) == want);
      boundary += want ? 1 : 0;
    }
  }
  CHECK(boundary > 0);
}

TEST_CASE("region filter keeps input order") {
  std::vector<Place> places{point_place("c", 0.5, 0.5), point_place("out", 5, 5), point_place("a", 0.1, 0.9)};
  auto kept = region_filter(places, unit_square());
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id == "c");
  CHECK(kept[1].id == "a");
}

TEST_CASE("frame_at latest-at-or-before within staleness") {
  Store store({point_place("A", 0, 0, 25.0), point_place("B", 1, 1)},
              MetricCatalog({base_metric("roaming"), derived_metric("density", "roaming / capacity")}));
  store.upsert(std::vector<Sample>{{"A", Timestamp::parse("2022-06-13T12:00:00Z"), "roaming", 40},
                                   {"A", Timestamp::parse("2022-06-13T12:05:00Z"), "roaming", 50}});
  auto f = frame_at(store, "roaming", Timestamp::parse("2022-06-13T12:07:00Z"), Duration(300));
  CHECK(f.value_of("A") == 50.0);
  CHECK(!f.value_of("B"));
  CHECK(f.values.size() == 2);

  auto stale = frame_at(store, "roaming", Timestamp::parse("2022-06-13T12:20:00Z"), Duration(300));
  CHECK(!stale.value_of("A"));

  // Inclusive edge of the staleness window.
  CHECK(frame_at(store, "roaming", Timestamp::parse("2022-06-13T12:10:00Z"), Duration(300)).value_of("A") == 50.0);
  CHECK(!frame_at(store, "roaming", Timestamp::parse("2022-06-13T11:59:59Z"), Duration(300)).value_of("A"));

  auto d = frame_at(store, "density", Timestamp::parse("2022-06-13T12:05:00Z"), Duration(300));
  CHECK(d.value_of("A") == 2.0);
  CHECK(!d.value_of("B"));
  CHECK_THROWS_AS(frame_at(store, "nope", T0, Duration(300)), UnknownMetricError);
}

TEST_CASE("sum_series examples") {
  Store store({point_place("a", 0.5, 0.5), point_place("b", 5, 5), point_place("c", 6, 6)},
              MetricCatalog({base_metric("m")}));
  store.upsert(std::vector<Sample>{{"a", T0, "m", 10}, {"b", T0, "m", 20}, {"c", T0, "m", 30}});
  auto all = sum_series(store, "m", T0, T0);
  REQUIRE(all.points.size() == 1);
  CHECK(all.points[0].value == 60.0);
  auto one = sum_series(store, "m", T0, T0, unit_square());
  CHECK(one.points[0].value == 10.0);
  CHECK(mean_series(store, "m", T0, T0).points[0].value == 20.0);

  store.upsert(std::vector<Sample>{{"b", T0 + Duration(600), "m", 7}});
  auto gap = sum_series(store, "m", T0, T0 + Duration(600), unit_square());
  REQUIRE(gap.points.size() == 2);
  CHECK(!gap.points[1].value);
  CHECK(sum_series(store, "m", T0 + Duration(1), T0 + Duration(599)).points.empty());
}

TEST_CASE("sum_series matches a brute-force loop over random stores") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 4; ++round) {
    auto places = random_places(rng, 10 + 5 * round);
    Store store(places, MetricCatalog({base_metric("m"), base_metric("n")}));
    auto samples = random_samples(rng, places, {"m", "n"}, 400, 20);
    store.upsert(samples);
    auto region = Region::from_ring({{1, 1}, {8, 2}, {7, 9}, {2, 6}});
    std::set<std::string> inside;
    for (const auto& p : region_filter(places, region)) inside.insert(p.id);
    Timestamp from(1'600'000'000), to = from + Duration(300 * 19);
    for (bool use_region : {false, true}) {
      auto got = sum_series(store, "m", from, to, use_region ? std::optional(region) : std::nullopt);
      auto want = oracle::brute_sum(samples, "m", from, to, use_region ? &inside : nullptr);
      REQUIRE(got.points.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got.points[i].t.epoch_seconds() == want[i].first);
        REQUIRE(got.points[i].value.has_value() == want[i].second.has_value());
        if (want[i].second) CHECK(*got.points[i].value == doctest::Approx(*want[i].second).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("whole-map sums equal sums over a region containing every place") {
  std::mt19937_64 rng(12);
  auto places = random_places(rng, 30);
  Store store(places, MetricCatalog({base_metric("m")}));
  store.upsert(random_samples(rng, places, {"m"}, 1000, 40));
  auto everything = Region::from_ring({{-1, -1}, {11, -1}, {11, 11}, {-1, 11}});
  Timestamp from(1'600'000'000), to = from + Duration(300 * 40);
  CHECK(sum_series(store, "m", from, to) == sum_series(store, "m", from, to, everything));
}

TEST_CASE("derived series evaluate per place at each instant") {
  Store store({point_place("a", 0, 0, 10.0), point_place("b", 1, 1, 20.0), point_place("c", 2, 2)},
              MetricCatalog({base_metric("roaming"), derived_metric("density", "roaming / capacity")}));
  store.upsert(std::vector<Sample>{{"a", T0, "roaming", 5}, {"b", T0, "roaming", 10}, {"c", T0, "roaming", 99},
                                   {"a", T0 + Duration(300), "roaming", 20}});
  auto s = sum_series(store, "density", T0, T0 + Duration(300));
  REQUIRE(s.points.size() == 2);
  CHECK(*s.points[0].value == doctest::Approx(1.0));
  CHECK(*s.points[1].value == doctest::Approx(2.0));
}

TEST_CASE("timeline hue examples") {
  CHECK(hues_of(series_of({10.0, 20.0, 30.0})) == std::vector<double>{120, 60, 0});
  CHECK(hues_of(series_of({5.0, 5.0, 5.0})) == std::vector<double>{120, 120, 120});
  auto with_gap = timeline_hues(series_of({1.0, std::nullopt, 3.0}));
  REQUIRE(with_gap.size() == 2);
  CHECK(with_gap[1].t == T0 + Duration(1200));
  CHECK_THROWS(timeline_hues(series_of({std::nullopt})));
  auto huge = hues_of(series_of({-1.7e308, 1.7e308}));
  CHECK(huge == std::vector<double>{120, 0});
}

TEST_CASE("property: hue anchors and range on random series") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> v(-1e6, 1e6);
  for (int i = 0; i < 300; ++i) {
    std::vector<Value> vals;
    for (int k = 0; k < 1 + i % 50; ++k) vals.push_back(v(rng));
    auto s = series_of(vals);
    auto hues = timeline_hues(s);
    auto lo = std::min_element(vals.begin(), vals.end()) - vals.begin();
    auto hi = std::max_element(vals.begin(), vals.end()) - vals.begin();
    CHECK(hues[static_cast<std::size_t>(lo)].hue == 120.0);
    if (vals.size() > 1) CHECK(hues[static_cast<std::size_t>(hi)].hue == 0.0);
    for (std::size_t k = 0; k < hues.size(); ++k) {
      CHECK(hues[k].hue >= 0.0);
      CHECK(hues[k].hue <= 120.0);
      CHECK(hues[k].hue == doctest::Approx(oracle::hue(*vals[k], *vals[lo], *vals[hi])).epsilon(1e-9));
    }
  }
}

TEST_CASE("normalize_to_cap and density") {
  CHECK(normalize_to_cap(50, 100) == 0.5);
  CHECK(normalize_to_cap(150, 100) == 1.0);
  CHECK(normalize_to_cap(-3, 100) == 0.0);
  CHECK_THROWS_AS(normalize_to_cap(1, 0), ConfigError);
  CHECK(density(120, 60.0) == 2.0);
  CHECK(!density(120, std::nullopt));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1, 1000);
  for (int i = 0; i < 50; ++i) {
    double val = u(rng), cap = u(rng);
    CHECK(*density(val, 2 * cap) == doctest::Approx(*density(val, cap) / 2));
  }
}

TEST_CASE("peak picks the earliest maximum") {
  auto p = peak(series_of({5.0, 9.0, 9.0}));
  CHECK(p.t == T0 + Duration(600));
  CHECK(p.value == 9.0);
  CHECK(peak(series_of({std::nullopt, 4.0})).value == 4.0);
  CHECK(peak(series_of({-3.0})).value == -3.0);
  CHECK_THROWS(peak(series_of({std::nullopt})));
}

TEST_CASE("hsl colours") {
  CHECK(hex_color(hsl_to_rgb(120)) == "#00ff00");
  CHECK(hex_color(hsl_to_rgb(0)) == "#ff0000");
  CHECK(hex_color(hsl_to_rgb(60)) == "#ffff00");
}
