#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "evseg/error.hpp"
#include "evseg/events.hpp"

using namespace evseg;

namespace {

std::vector<Event> parse(const std::string& text, SensorGeometry g = {10, 10}) {
  std::istringstream in(text);
  return parse_events(in, g);
}

}  // namespace

TEST_CASE("event records map field by field") {
  const auto ev = parse("100,3,4,1\n");
  REQUIRE(ev.size() == 1);
  CHECK(ev[0] == Event{100, 3, 4, 1});
}

TEST_CASE("polarity 0 becomes -1") {
  CHECK(parse("100,3,4,0\n")[0].p == -1);
  CHECK(parse("100 3 4 -1\n")[0].p == -1);
}

TEST_CASE("out-of-sensor pixels are rejected") {
  CHECK_THROWS_AS(parse("100,12,4,1\n"), BoundsError);
  CHECK_THROWS_AS(parse("100,3,10,1\n"), BoundsError);
}

TEST_CASE("malformed lines report their line number") {
  try {
    parse("t,x,y,p\n1,1,1,1\n# comment\n2,1,x,1\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(parse("-5,1,1,1\n"), ParseError);
  CHECK_THROWS_AS(parse("5,1,1,2\n"), ParseError);
}

TEST_CASE("header and comments are skipped") {
  const auto ev = parse("# geometry 10 10\nt,x,y,p\n\n1,2,3,1\n");
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].t == 1);
}

TEST_CASE("serialising and re-parsing is lossless") {
  std::vector<Event> ev;
  for (int i = 0; i < 50; ++i) ev.push_back({i * 37, i % 10, (i * 7) % 10, i % 3 == 0 ? -1 : 1});
  std::ostringstream out;
  write_events(out, ev, SensorGeometry{10, 10});
  CHECK(parse(out.str()) == ev);
}

TEST_CASE("label files keep object ids") {
  std::istringstream in("0\n1,3\n1\n");
  const auto labels = parse_labels(in);
  REQUIRE(labels.size() == 3);
  CHECK(labels[1] == EventLabel{1, 3});
  CHECK(labels[2] == EventLabel{1, 0});
  std::ostringstream out;
  write_labels(out, labels);
  std::istringstream back(out.str());
  CHECK(parse_labels(back) == labels);

  std::istringstream bad("0\n2\n");
  CHECK_THROWS_AS(parse_labels(bad), ParseError);
}

TEST_CASE("cap keeps the most recent events") {
  std::vector<Event> ev;
  for (int i = 0; i < 7000; ++i) ev.push_back({static_cast<Micros>(i * 10000 / 7000), 0, 0, 1});
  const auto windows = slice_windows(ev, 10000, 5000);
  REQUIRE(windows.size() == 1);
  CHECK(windows[0].events.size() == 5000);
  CHECK(windows[0].source_index.front() == 2000);
  CHECK(windows[0].source_index.back() == 6999);
}

TEST_CASE("empty stream gives no windows") { CHECK(slice_windows({}, 10000, 5000).empty()); }

TEST_CASE("windows bucket by floor(t / duration)") {
  const std::vector<Event> ev{{1000, 0, 0, 1}, {2000, 0, 0, 1}, {3000, 0, 0, 1}};
  const auto w = slice_windows(ev, 2000, 5000);
  REQUIRE(w.size() == 2);
  CHECK(w[0].events.size() == 1);
  CHECK(w[0].events[0].t == 1000);
  CHECK(w[1].events.size() == 2);
  CHECK(w[1].t_start == 2000);
}

TEST_CASE("unsorted streams are refused") {
  CHECK_THROWS_AS(slice_windows({{5, 0, 0, 1}, {3, 0, 0, 1}}, 10, 10), OrderingError);
}

TEST_CASE("windows partition the capped stream") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Event> ev;
    Micros t = 0;
    const int n = 1 + static_cast<int>(rng() % 400);
    for (int i = 0; i < n; ++i) {
      t += rng() % 50;
      ev.push_back({t, 0, 0, 1});
    }
    const std::size_t cap = 1 + rng() % 40;
    const Micros dur = 1 + rng() % 500;
    std::set<std::size_t> seen;
    std::map<Micros, std::size_t> per_bucket;
    for (const auto& e : ev) ++per_bucket[e.t / dur];
    std::size_t expected = 0;
    for (const auto& [b, c] : per_bucket) expected += std::min(c, cap);
    for (const auto& w : slice_windows(ev, dur, cap)) {
      CHECK(w.events.size() <= cap);
      for (std::size_t i = 0; i < w.events.size(); ++i) {
        CHECK(seen.insert(w.source_index[i]).second);
        CHECK(ev[w.source_index[i]] == w.events[i]);
        CHECK(w.events[i].t >= w.t_start);
        CHECK(w.events[i].t < w.t_end);
      }
    }
    CHECK(seen.size() == expected);
  }
}
