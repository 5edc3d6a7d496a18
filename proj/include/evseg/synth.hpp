#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "evseg/events.hpp"
#include "evseg/image.hpp"

namespace evseg {

enum class ObjectShape { rect, disc };

struct SceneObject {
  ObjectShape shape = ObjectShape::disc;
  double width = 20.0;   // disc: diameter
  double height = 20.0;  // ignored for discs
  double x0 = 0.0, y0 = 0.0;  // center at t = 0, px
  double vx = 0.0, vy = 0.0;  // px/s
  std::uint64_t texture_seed = 7;
};

struct SceneConfig {
  SensorGeometry geometry{128, 96};
  Micros duration = 100000;
  double pan_vx = 0.0, pan_vy = 0.0;  // px/s
  std::vector<SceneObject> objects;
  std::uint64_t texture_seed = 1;
  double texture_scale = 10.0;  // px between coarse noise lattice points
  double contrast_threshold = 0.2;
  double noise_rate = 0.0;  // events / px / s
  double sim_rate_hz = 1000.0;
  Micros frame_interval = 10000;  // frames and masks; a multiple of the sim step

  void validate() const;
  Micros step() const;
};

struct SynthOutput {
  SensorGeometry geometry;
  std::vector<Event> events;
  std::vector<EventLabel> labels;
  std::vector<ApsFrame> frames;
  /// Mask f covers every pixel an object touches during [t_f, t_f + interval].
  std::vector<ObjectMask> masks;
};

/// Scene intensity in (0, 1) at pixel (x, y) and time t (seconds), plus the
/// id of the topmost object covering the pixel (0 if none).
struct SceneSample {
  double intensity;
  int object;
};
SceneSample sample_scene(const SceneConfig& config, double x, double y, double t_seconds);

/// Deterministic for a fixed (config, seed); `seed` drives the noise events.
SynthOutput generate(const SceneConfig& config, std::uint64_t seed);

/// A panning background with `objects` fast objects crossing the view.
SceneConfig random_scene(std::uint64_t seed, std::size_t objects, SensorGeometry geometry = {128, 96},
                         Micros duration = 100000);

/// Writes events.txt, labels.txt, frames/<t>.pgm and masks/<t>.pgm.
void write_sequence(const std::filesystem::path& dir, const SynthOutput& out);

}  // namespace evseg
