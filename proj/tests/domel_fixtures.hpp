#pragma once

// Hand-built labeling scenes with known masks, shared by the unit and
// acceptance tests.

#include <cmath>
#include <numbers>
#include <vector>

#include "evseg/domel.hpp"

namespace evseg::testing {

inline double degrees(double d) { return d * std::numbers::pi / 180.0; }

/// Rigid motion about `(cx, cy)`, rounded back onto the pixel grid.
inline std::vector<Event> misalign(std::span<const Event> events, double theta, double tx, double ty,
                                   double cx, double cy) {
  const double c = std::cos(theta), s = std::sin(theta);
  std::vector<Event> out;
  out.reserve(events.size());
  for (Event e : events) {
    const double dx = e.x - cx, dy = e.y - cy;
    e.x = static_cast<int>(std::lround(cx + c * dx - s * dy + tx));
    e.y = static_cast<int>(std::lround(cy + s * dx + c * dy + ty));
    out.push_back(e);
  }
  return out;
}

/// A bright square on a dark frame. Events sit on every mask boundary pixel,
/// on every interior pixel at least `clearance` from the boundary, and on a
/// sparse background lattice at least `clearance` away from the square.
struct SquareScene {
  int x0 = 30, y0 = 20, side = 30;
  ObjectMask mask;
  ApsFrame frame;
  std::vector<Event> events;
  std::vector<bool> inside;

  bool contains(int x, int y) const { return x >= x0 && y >= y0 && x < x0 + side && y < y0 + side; }
  double cx() const { return x0 + (side - 1) / 2.0; }
  double cy() const { return y0 + (side - 1) / 2.0; }
};

inline SquareScene square_scene(int clearance = 12, bool fill_interior = true) {
  SquareScene s;
  const int w = 96, h = 72;
  s.mask.ids = GrayImage(w, h, 0);
  s.frame.image = GrayImage(w, h, 20);
  for (int y = s.y0; y < s.y0 + s.side; ++y) {
    for (int x = s.x0; x < s.x0 + s.side; ++x) {
      s.mask.ids.at(x, y) = 1;
      s.frame.image.at(x, y) = 230;
    }
  }
  Micros t = 0;
  auto emit = [&](int x, int y, bool in) {
    s.events.push_back({t++, x, y, 1});
    s.inside.push_back(in);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int dx = std::max({s.x0 - x, x - (s.x0 + s.side - 1), 0});
      const int dy = std::max({s.y0 - y, y - (s.y0 + s.side - 1), 0});
      if (s.contains(x, y)) {
        const int depth = std::min({x - s.x0, s.x0 + s.side - 1 - x, y - s.y0, s.y0 + s.side - 1 - y});
        if (depth == 0 || (fill_interior && depth >= clearance)) emit(x, y, true);
      } else if (std::max(dx, dy) >= clearance && x % 4 == 0 && y % 4 == 0) {
        emit(x, y, false);
      }
    }
  }
  return s;
}

}  // namespace evseg::testing
