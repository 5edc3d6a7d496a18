#pragma once

#include <vector>

#include "evseg/image.hpp"
#include "evseg/metrics.hpp"

namespace evseg {

struct CannyConfig {
  double sigma = 1.4;
  double low = 40.0;   // gradient magnitude, 0..255 intensity scale
  double high = 100.0;
};

/// Gaussian smoothing (replicated border), Sobel gradients, non-maximum
/// suppression along the quantised gradient direction, and 8-connected
/// hysteresis. Returns edge pixels in row-major order.
std::vector<PixelPoint> canny_edges(const GrayImage& image, const CannyConfig& config = {});

}  // namespace evseg
