#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evseg/events.hpp"

namespace evseg {

/// 8-bit single-channel raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

struct ApsFrame {
  Micros timestamp = 0;
  GrayImage image;
};

/// Per-pixel object id, 0 for background.
struct ObjectMask {
  Micros timestamp = 0;
  GrayImage ids;
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// `<timestamp>.pgm` files of a directory, sorted by timestamp.
std::vector<std::pair<Micros, std::filesystem::path>> list_timestamped_pgms(
    const std::filesystem::path& dir);

std::vector<ApsFrame> read_frames(const std::filesystem::path& dir);
std::vector<ObjectMask> read_masks(const std::filesystem::path& dir);

}  // namespace evseg
