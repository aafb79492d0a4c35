#include <doctest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include "crowdlens/error.hpp"
#include "crowdlens/sample_csv.hpp"
#include "crowdlens/store.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace crowdlens;
using namespace fixtures;

namespace {

Store make_store(std::vector<Place> places) {
  return Store(std::move(places), MetricCatalog({base_metric("total"), base_metric("roaming"),
                                                 derived_metric("density", "total / capacity")}));
}

std::vector<Sample> hundred(const std::vector<Place>& places) {
  std::vector<Sample> out;
  for (int i = 0; i < 100; ++i)
    out.push_back({places[static_cast<std::size_t>(i) % places.size()].id, Timestamp(1000 + 300 * (i / 5)),
                   i % 2 ? "total" : "roaming", static_cast<double>(i)});
  return out;
}

std::string csv_of(const Store& s) {
  std::ostringstream out;
  s.write_csv(out);
  return out.str();
}

}  // namespace

TEST_CASE("upsert is idempotent and returns the batch size") {
  std::mt19937_64 rng(1);
  auto places = random_places(rng, 7);
  auto store = make_store(places);
  auto batch = hundred(places);
  CHECK(store.upsert(batch) == 100);
  auto first = csv_of(store);
  auto stats = store.stats();
  CHECK(store.upsert(batch) == 100);
  CHECK(csv_of(store) == first);
  CHECK(store.stats() == stats);
  CHECK(stats.sample_count == 100);
}

TEST_CASE("upsert rejects the whole batch on a bad sample") {
  std::mt19937_64 rng(2);
  auto places = random_places(rng, 3);
  auto store = make_store(places);
  std::vector<Sample> batch{{places[0].id, Timestamp(0), "total", 1.0}, {"nowhere", Timestamp(0), "total", 2.0}};
  CHECK_THROWS_AS(store.upsert(batch), IntegrityError);
  CHECK(store.stats().sample_count == 0);

  CHECK_THROWS_AS(store.upsert(std::vector<Sample>{{places[0].id, Timestamp(0), "ghost", 1.0}}), IntegrityError);
  CHECK_THROWS_AS(store.upsert(std::vector<Sample>{{places[0].id, Timestamp(0), "density", 1.0}}), IntegrityError);
  CHECK_THROWS_AS(store.upsert(std::vector<Sample>{{places[0].id, Timestamp(0), "total", std::nan("")}}),
                  IntegrityError);
  try {
    store.upsert(batch);
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
  }
}

TEST_CASE("last sample for a key wins within a batch and across batches") {
  auto store = make_store({point_place("a", 0, 0)});
  store.upsert(std::vector<Sample>{{"a", Timestamp(10), "total", 1.0}, {"a", Timestamp(10), "total", 2.0}});
  CHECK(store.query_range("total", Timestamp(0), Timestamp(100)).at(0).value == 2.0);
  store.upsert(std::vector<Sample>{{"a", Timestamp(10), "total", 3.0}});
  auto r = store.query_range("total", Timestamp(0), Timestamp(100));
  REQUIRE(r.size() == 1);
  CHECK(r[0].value == 3.0);
}

TEST_CASE("query_range examples") {
  std::mt19937_64 rng(3);
  auto places = random_places(rng, 4);
  auto store = make_store(places);
  store.upsert(std::vector<Sample>{{places[0].id, Timestamp(100), "total", 1},
                                   {places[1].id, Timestamp(100), "total", 2},
                                   {places[0].id, Timestamp(400), "total", 3},
                                   {places[2].id, Timestamp(400), "roaming", 4}});
  CHECK(store.query_range("total", Timestamp(0), Timestamp(1000)).size() == 3);
  CHECK(store.query_range("total", Timestamp(101), Timestamp(399)).empty());
  CHECK(store.query_range("total", Timestamp(100), Timestamp(100)).size() == 2);
  CHECK(store.query_range("total", Timestamp(0), Timestamp(1000), std::set<std::string, std::less<>>{places[0].id})
            .size() == 2);
  CHECK_THROWS_AS(store.query_range("density", Timestamp(0), Timestamp(1)), UnknownMetricError);
  CHECK_THROWS_AS(store.query_range("nope", Timestamp(0), Timestamp(1)), UnknownMetricError);
}

TEST_CASE("query_range matches a linear scan over 10^4 random samples") {
  std::mt19937_64 rng(4);
  auto places = random_places(rng, 60);
  auto store = make_store(places);
  auto samples = random_samples(rng, places, {"total", "roaming"}, 10000, 200);
  // Several batches so cross-batch merges are exercised.
  for (std::size_t i = 0; i < samples.size(); i += 2500)
    store.upsert(std::span(samples).subspan(i, std::min<std::size_t>(2500, samples.size() - i)));
  std::uniform_int_distribution<int> off(0, 200 * 300);
  for (int q = 0; q < 40; ++q) {
    Timestamp a = Timestamp(1'600'000'000 + off(rng)), b = Timestamp(1'600'000'000 + off(rng));
    if (b < a) std::swap(a, b);
    for (const char* m : {"total", "roaming"}) {
      auto got = store.query_range(m, a, b);
      auto want = oracle::scan_range(samples, m, a, b);
      REQUIRE(got.size() == want.size());
      CHECK(got == want);
      for (std::size_t i = 1; i < got.size(); ++i)
        CHECK(std::tie(got[i - 1].t, got[i - 1].place_id) < std::tie(got[i].t, got[i].place_id));
    }
  }
}

TEST_CASE("snapshot round trip") {
  auto dir = temp_dir("snap");
  std::mt19937_64 rng(5);
  auto places = random_places(rng, 10);
  auto store = make_store(places);
  store.upsert(random_samples(rng, places, {"total", "roaming"}, 500, 30));
  store.save_snapshot(dir / "s.csv");

  auto other = make_store(places);
  auto stats = other.load_snapshot(dir / "s.csv");
  CHECK(stats == store.stats());
  CHECK(csv_of(other) == csv_of(store));

  auto empty = make_store(places);
  empty.save_snapshot(dir / "empty.csv");
  auto e2 = make_store(places);
  CHECK(e2.load_snapshot(dir / "empty.csv").sample_count == 0);
  CHECK(!e2.stats().t_min);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated snapshot reports the broken line and leaves the store untouched") {
  auto dir = temp_dir("trunc");
  auto store = make_store({point_place("a", 0, 0)});
  store.upsert(std::vector<Sample>{{"a", Timestamp(0), "total", 1}, {"a", Timestamp(300), "total", 2},
                                   {"a", Timestamp(600), "total", 3}});
  store.save_snapshot(dir / "s.csv");
  auto text = file_text(dir / "s.csv");
  write_text(dir / "cut.csv", text.substr(0, text.size() - 3));

  auto target = make_store({point_place("a", 0, 0)});
  target.upsert(std::vector<Sample>{{"a", Timestamp(5), "roaming", 9}});
  try {
    target.load_snapshot(dir / "cut.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }
  CHECK(target.stats().sample_count == 1);

  write_text(dir / "ref.csv", std::string(kSampleCsvHeader) + "\nghost,2022-01-01T00:00:00Z,total,1\n");
  CHECK_THROWS_AS(target.load_snapshot(dir / "ref.csv"), IntegrityError);
  CHECK(target.stats().sample_count == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sample CSV parsing") {
  std::string good = std::string(kSampleCsvHeader) + "\n\"a,1\",2022-06-13T00:00:00Z,total,12.5\nb,2022-06-13T00:05:00Z,total,3\n";
  auto s = parse_sample_csv(good);
  REQUIRE(s.size() == 2);
  CHECK(s[0].place_id == "a,1");
  CHECK(s[0].value == 12.5);
  std::ostringstream out;
  write_sample_csv(out, s);
  CHECK(out.str() == good);

  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_sample_csv(text);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return 0;
  };
  std::string h = std::string(kSampleCsvHeader) + "\n";
  CHECK(line_of("wrong,header\n") == 1);
  CHECK(line_of("") == 1);
  CHECK(line_of(h + "a,2022-06-13T00:00:00Z,total,1\na,bad,total,1\n") == 3);
  CHECK(line_of(h + "a,2022-06-13T00:00:00Z,total,nan\n") == 2);
  CHECK(line_of(h + "a,2022-06-13T00:00:00Z,total\n") == 2);
  CHECK(line_of(h + "a,2022-06-13T00:00:00Z,total,1") == 2);
  CHECK(format_value(0.1) == "0.1");
  CHECK(format_value(75000) == "75000");
}

TEST_CASE("concurrent readers see whole batches") {
  std::vector<Place> places;
  for (int i = 0; i < 20; ++i) places.push_back(point_place("p" + std::to_string(i), 0, 0));
  auto store = make_store(places);
  std::atomic<bool> torn{false};
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done.load()) {
      // Every batch writes all 20 places at one instant, so a reader must see
      // a multiple of 20 samples.
      if (store.query_range("total", Timestamp(0), Timestamp(1'000'000)).size() % 20 != 0) torn = true;
    }
  });
  for (int b = 0; b < 200; ++b) {
    std::vector<Sample> batch;
    for (const auto& p : places) batch.push_back({p.id, Timestamp(b * 60), "total", 1.0});
    store.upsert(batch);
  }
  done = true;
  reader.join();
  CHECK(!torn.load());
  CHECK(store.stats().sample_count == 4000);
}
