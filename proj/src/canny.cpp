#include "evseg/canny.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace evseg {
namespace {

struct FloatImage {
  int w = 0, h = 0;
  std::vector<double> v;

  FloatImage(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
  double at(int x, int y) const {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return v[static_cast<std::size_t>(y) * w + x];
  }
  double& ref(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

FloatImage gaussian_blur(const GrayImage& img, double sigma) {
  FloatImage src(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) src.v[i] = img.pixels[i];
  if (sigma <= 0.0) return src;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  FloatImage tmp(img.width, img.height), out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src.at(x + i, y);
      tmp.ref(x, y) = acc;
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(x, y + i);
      out.ref(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<PixelPoint> canny_edges(const GrayImage& image, const CannyConfig& config) {
  const int w = image.width, h = image.height;
  if (w == 0 || h == 0) return {};
  const FloatImage s = gaussian_blur(image, config.sigma);

  FloatImage mag(w, h);
  std::vector<std::uint8_t> dir(static_cast<std::size_t>(w) * h, 0);
  constexpr double kTan22 = 0.41421356237309503;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (s.at(x + 1, y - 1) + 2 * s.at(x + 1, y) + s.at(x + 1, y + 1)) -
                        (s.at(x - 1, y - 1) + 2 * s.at(x - 1, y) + s.at(x - 1, y + 1));
      const double gy = (s.at(x - 1, y + 1) + 2 * s.at(x, y + 1) + s.at(x + 1, y + 1)) -
                        (s.at(x - 1, y - 1) + 2 * s.at(x, y - 1) + s.at(x + 1, y - 1));
      mag.ref(x, y) = std::hypot(gx, gy);
      const double ax = std::abs(gx), ay = std::abs(gy);
      std::uint8_t d;
      if (ay <= kTan22 * ax) d = 0;       // horizontal gradient
      else if (ax <= kTan22 * ay) d = 2;  // vertical gradient
      else d = (gx * gy > 0) ? 1 : 3;     // diagonals
      dir[static_cast<std::size_t>(y) * w + x] = d;
    }
  }

  // Neighbour offsets along the gradient, negative side first. The strict
  // test on the negative side keeps exactly one pixel of a symmetric ridge.
  // Magnitudes closer than `tie` count as equal: blur round-off would
  // otherwise pick the ridge side pixel by pixel and leave a ragged edge.
  static constexpr int kStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  auto sample = [&](int x, int y) { return mag.at(x, y); };
  const double tie = 1e-9 * std::max(1.0, *std::max_element(mag.v.begin(), mag.v.end()));
  std::vector<double> thin(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag.at(x, y);
      if (m <= 0.0) continue;
      const auto& st = kStep[dir[static_cast<std::size_t>(y) * w + x]];
      const double prev = sample(x - st[0], y - st[1]);
      const double next = sample(x + st[0], y + st[1]);
      if (m > prev + tie && m >= next - tie) thin[static_cast<std::size_t>(y) * w + x] = m;
    }
  }

  std::vector<std::uint8_t> state(thin.size(), 0);  // 1 weak, 2 edge
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] >= config.high) {
      state[i] = 2;
      stack.push_back(i);
    } else if (thin[i] >= config.low) {
      state[i] = 1;
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (state[j] == 1) {
          state[j] = 2;
          stack.push_back(j);
        }
      }
    }
  }

  std::vector<PixelPoint> edges;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] == 2) edges.push_back({static_cast<int>(i % w), static_cast<int>(i / w)});
  }
  return edges;
}

}  // namespace evseg
