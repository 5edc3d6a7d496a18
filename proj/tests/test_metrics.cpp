#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "evseg/error.hpp"
#include "evseg/metrics.hpp"

using namespace evseg;

namespace {

long long orient(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c) {
  return static_cast<long long>(b.x - a.x) * (c.y - a.y) - static_cast<long long>(b.y - a.y) * (c.x - a.x);
}

bool in_triangle(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c, const PixelPoint& p) {
  const long long d1 = orient(a, b, p), d2 = orient(b, c, p), d3 = orient(c, a, p);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

// A pixel is in the hull iff some triangle of input points contains it. All
// collinear inputs use the one-pixel-per-step segment rule.
SegMask hull_oracle(const std::vector<PixelPoint>& pts, SensorGeometry g) {
  SegMask m(g);
  bool collinear = true;
  for (std::size_t i = 2; i < pts.size() && collinear; ++i) {
    for (std::size_t j = 1; j < i && collinear; ++j) collinear = orient(pts[0], pts[j], pts[i]) == 0;
  }
  if (collinear) {
    PixelPoint a = pts[0], b = pts[0];
    for (const auto& p : pts) {
      if (p.x < a.x || (p.x == a.x && p.y < a.y)) a = p;
      if (p.x > b.x || (p.x == b.x && p.y > b.y)) b = p;
    }
    const int n = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
    for (int s = 0; s <= n; ++s) {
      const double t = n == 0 ? 0.0 : static_cast<double>(s) / n;
      m.set(a.x + static_cast<int>(std::floor(t * (b.x - a.x) + 0.5)),
            a.y + static_cast<int>(std::floor(t * (b.y - a.y) + 0.5)));
    }
    return m;
  }
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const PixelPoint p{x, y};
      bool inside = false;
      for (std::size_t i = 0; i < pts.size() && !inside; ++i) {
        for (std::size_t j = i + 1; j < pts.size() && !inside; ++j) {
          for (std::size_t k = j + 1; k < pts.size() && !inside; ++k) {
            if (orient(pts[i], pts[j], pts[k]) != 0) inside = in_triangle(pts[i], pts[j], pts[k], p);
          }
        }
      }
      if (inside) m.set(x, y);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("scores from large confusion counts") {
  const Scores a = scores({97681, 96816, 2216680, 58823});
  CHECK(a.f1 == doctest::Approx(55.6585).epsilon(1e-5));
  CHECK(a.recall == doctest::Approx(62.4147).epsilon(1e-5));
  const Scores b = scores({82264, 145343, 2168062, 74248});
  // 2tp / (2tp + fp + fn)
  CHECK(b.f1 == doctest::Approx(100.0 * 164528.0 / 384119.0).epsilon(1e-9));
  CHECK(b.recall == doctest::Approx(52.5608).epsilon(1e-5));
}

TEST_CASE("score edge cases") {
  const Scores perfect = scores({10, 0, 5, 0});
  CHECK(perfect.recall == 100.0);
  CHECK(perfect.precision == 100.0);
  CHECK(perfect.f1 == 100.0);
  const Scores none = scores({0, 0, 7, 0});
  CHECK(none.recall == 0.0);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  const ConfusionCounts c = confusion(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.total() == 4);
}

TEST_CASE("hull mask examples") {
  const SensorGeometry g{8, 8};
  const std::vector<PixelPoint> square{{0, 0}, {0, 2}, {2, 0}, {2, 2}};
  CHECK(hull_mask(square, g).count() == 9);
  const std::vector<PixelPoint> single{{3, 4}};
  const SegMask one = hull_mask(single, g);
  CHECK(one.count() == 1);
  CHECK(one.at(3, 4));
  const std::vector<PixelPoint> column{{0, 0}, {0, 4}};
  const SegMask col = hull_mask(column, g);
  CHECK(col.count() == 5);
  for (int y = 0; y <= 4; ++y) CHECK(col.at(0, y));
  CHECK(hull_mask(std::vector<PixelPoint>{}, g).count() == 0);
  CHECK_THROWS_AS(hull_mask(std::vector<PixelPoint>{{9, 0}}, g), BoundsError);
}

TEST_CASE("hull mask matches the triangle oracle") {
  std::mt19937_64 rng(31);
  const SensorGeometry g{64, 64};
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<PixelPoint> pts(n);
    const int span = trial % 3 == 0 ? 6 : 64;  // small spans make duplicates and collinear sets likely
    for (auto& p : pts) p = {static_cast<int>(rng() % span), static_cast<int>(rng() % span)};
    CHECK(hull_mask(pts, g).bits == hull_oracle(pts, g).bits);
  }
}

TEST_CASE("iou examples and symmetry") {
  const SensorGeometry g{6, 6};
  const std::vector<PixelPoint> sq{{0, 0}, {2, 2}, {0, 2}, {2, 0}};
  const std::vector<PixelPoint> sub{{0, 0}, {1, 2}, {0, 2}, {1, 0}};
  const SegMask a = hull_mask(sq, g), b = hull_mask(sub, g);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == doctest::Approx(6.0 / 9.0));
  CHECK(iou(b, a) == iou(a, b));
  CHECK(iou(SegMask(g), SegMask(g)) == 1.0);
  CHECK(iou(a, SegMask(g)) == 0.0);
  const SegMask far = hull_mask(std::vector<PixelPoint>{{5, 5}}, g);
  CHECK(iou(a, far) == 0.0);
  CHECK_THROWS_AS(iou(a, SegMask({5, 6})), ShapeError);

  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    SegMask x(g), y(g);
    for (auto& v : x.bits) v = rng() % 2;
    for (auto& v : y.bits) v = rng() % 2;
    CHECK(iou(x, y) == iou(y, x));
    CHECK((iou(x, y) == 1.0) == (x.bits == y.bits));
  }
}

TEST_CASE("detection criterion") {
  const DetectionBox g{10, 10, 19, 19};
  CHECK(detection_success(g, g));
  CHECK_FALSE(detection_success({30, 30, 35, 35}, g));
  // Covers 60 of G's 100 pixels, but D has 1000 pixels.
  const DetectionBox big{10, 10, 15, 176};
  CHECK(intersection_area(big, g) == 60);
  CHECK(big.area() == 1002);
  CHECK(box_overlap(big, g) == doctest::Approx(0.6));
  CHECK_FALSE(detection_success(big, g));
  const DetectionBox half{10, 10, 14, 19};
  CHECK_FALSE(detection_success(half, g));  // overlap exactly 0.5 is not above 0.5
}

TEST_CASE("detection rate matches each truth once") {
  const std::vector<DetectionBox> truth{{0, 0, 9, 9}, {20, 20, 29, 29}};
  const std::vector<DetectionBox> det{{0, 0, 9, 9}, {1, 1, 9, 9}, {50, 50, 52, 52}};
  const DetectionResult r = detection_rate(det, truth);
  CHECK(r.successes == 1);
  CHECK(r.truths == 2);
  CHECK(r.matched_detection[0] == 0);
  CHECK(r.matched_detection[1] == -1);
  CHECK(r.rate() == 50.0);
}

TEST_CASE("detection is translation invariant") {
  std::mt19937_64 rng(33);
  auto box = [&] {
    const int x = rng() % 50, y = rng() % 50;
    return DetectionBox{x, y, x + static_cast<int>(rng() % 20), y + static_cast<int>(rng() % 20)};
  };
  for (int trial = 0; trial < 200; ++trial) {
    const DetectionBox d = box(), g = box();
    const int tx = static_cast<int>(rng() % 40) - 20, ty = static_cast<int>(rng() % 40) - 20;
    const DetectionBox d2{d.x_min + tx, d.y_min + ty, d.x_max + tx, d.y_max + ty};
    const DetectionBox g2{g.x_min + tx, g.y_min + ty, g.x_max + tx, g.y_max + ty};
    CHECK(detection_success(d, g) == detection_success(d2, g2));
  }
}

TEST_CASE("window evaluation of identical labels") {
  const SensorGeometry geo{32, 32};
  std::vector<Event> ev;
  std::vector<EventLabel> lab;
  for (int i = 0; i < 40; ++i) {
    ev.push_back({i, i % 7 + (i % 2) * 15, i % 5 + 3, 1});
    lab.push_back({i % 2, i % 2 ? 2 : 0});
  }
  const WindowReport r = evaluate_window(0, ev, lab, lab, geo);
  CHECK(r.iou == 1.0);
  CHECK(r.detection.successes == 1);
  CHECK(r.detection.truths == 1);
  CHECK(r.counts.fp == 0);
  CHECK(r.counts.fn == 0);

  EvaluationReport rep;
  rep.windows.push_back(r);
  rep.counts = r.counts;
  std::ostringstream csv;
  rep.write_csv(csv);
  CHECK(csv.str().rfind("window_id,iou,dr_success,tp,fp,tn,fn\n0,1,1,20,0,20,0\nsummary,", 0) == 0);
}
