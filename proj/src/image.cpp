#include "evseg/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "evseg/error.hpp"

namespace evseg {
namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (pgm_token(in) != "P5") throw ParseError(1, path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(in));
    h = std::stoi(pgm_token(in));
    maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw ParseError(1, path.string() + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw ParseError(1, path.string() + ": unsupported PGM dimensions or depth");
  }
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ParseError(1, path.string() + ": truncated PGM data");
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::pair<Micros, std::filesystem::path>> list_timestamped_pgms(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<Micros, std::filesystem::path>> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    try {
      std::size_t used = 0;
      const long long t = std::stoll(stem, &used);
      if (used != stem.size()) continue;
      out.emplace_back(static_cast<Micros>(t), entry.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ApsFrame> read_frames(const std::filesystem::path& dir) {
  std::vector<ApsFrame> out;
  for (const auto& [t, p] : list_timestamped_pgms(dir)) out.push_back({t, read_pgm(p)});
  return out;
}

std::vector<ObjectMask> read_masks(const std::filesystem::path& dir) {
  std::vector<ObjectMask> out;
  for (const auto& [t, p] : list_timestamped_pgms(dir)) out.push_back({t, read_pgm(p)});
  return out;
}

}  // namespace evseg
