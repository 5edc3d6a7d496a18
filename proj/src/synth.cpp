#include "evseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "evseg/error.hpp"

namespace evseg {
namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632BE59BD9B4E019ull ^
                                                   static_cast<std::uint64_t>(iy) * 0x85157AF5ull));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(double x, double y, double scale, std::uint64_t seed) {
  const double u = x / scale, v = y / scale;
  const double fu = std::floor(u), fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu), iv = static_cast<std::int64_t>(fv);
  double a = u - fu, b = v - fv;
  a = a * a * (3 - 2 * a);
  b = b * b * (3 - 2 * b);
  const double n00 = lattice(iu, iv, seed), n10 = lattice(iu + 1, iv, seed);
  const double n01 = lattice(iu, iv + 1, seed), n11 = lattice(iu + 1, iv + 1, seed);
  return (n00 * (1 - a) + n10 * a) * (1 - b) + (n01 * (1 - a) + n11 * a) * b;
}

// Smoothed two-octave noise pushed through a soft threshold: patchy blobs with
// edges a couple of pixels wide.
double texture(double x, double y, double scale, std::uint64_t seed) {
  const double n = 0.7 * value_noise(x, y, scale, seed) + 0.3 * value_noise(x, y, 0.5 * scale, seed + 1);
  const double s = 1.0 / (1.0 + std::exp(-(n - 0.5) / 0.04));
  return 0.15 + 0.7 * s;
}

bool covers(const SceneObject& o, double x, double y, double t) {
  const double dx = x - (o.x0 + o.vx * t);
  const double dy = y - (o.y0 + o.vy * t);
  if (o.shape == ObjectShape::disc) return dx * dx + dy * dy <= 0.25 * o.width * o.width;
  return std::abs(dx) <= 0.5 * o.width && std::abs(dy) <= 0.5 * o.height;
}

}  // namespace

void SceneConfig::validate() const {
  if (geometry.width <= 0 || geometry.height <= 0) throw Error("scene geometry must be positive");
  if (duration <= 0) throw Error("scene duration must be positive");
  if (!(contrast_threshold > 0.0)) throw Error("contrast threshold must be positive");
  if (noise_rate < 0.0) throw Error("noise rate must be non-negative");
  if (!(sim_rate_hz > 0.0) || 1e6 / sim_rate_hz < 1.0) throw Error("invalid simulation rate");
  if (objects.size() > 255) throw Error("at most 255 objects fit in an 8-bit mask");
  if (frame_interval <= 0 || frame_interval % step() != 0) {
    throw Error("frame interval must be a positive multiple of the simulation step");
  }
}

Micros SceneConfig::step() const { return static_cast<Micros>(std::llround(1e6 / sim_rate_hz)); }

SceneSample sample_scene(const SceneConfig& config, double x, double y, double t) {
  for (std::size_t i = config.objects.size(); i-- > 0;) {
    const SceneObject& o = config.objects[i];
    if (covers(o, x, y, t)) {
      const double ox = x - (o.x0 + o.vx * t), oy = y - (o.y0 + o.vy * t);
      return {texture(ox, oy, 0.6 * config.texture_scale, o.texture_seed), static_cast<int>(i) + 1};
    }
  }
  return {texture(x + config.pan_vx * t, y + config.pan_vy * t, config.texture_scale, config.texture_seed), 0};
}

SynthOutput generate(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  const int w = config.geometry.width, h = config.geometry.height;
  const std::size_t n_pix = static_cast<std::size_t>(w) * h;
  const Micros dt = config.step();
  const double C = config.contrast_threshold;

  SynthOutput out;
  out.geometry = config.geometry;

  std::vector<double> log_prev(n_pix), log_cur(n_pix), reference(n_pix);
  std::vector<int> cover_prev(n_pix), cover_cur(n_pix);
  std::vector<std::uint8_t> intensity8(n_pix);

  auto render = [&](Micros t, std::vector<double>& logs, std::vector<int>& cover) {
    const double ts = static_cast<double>(t) * 1e-6;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const SceneSample s = sample_scene(config, x, y, ts);
        logs[i] = std::log(s.intensity);
        cover[i] = s.object;
        intensity8[i] = static_cast<std::uint8_t>(std::lround(255.0 * s.intensity));
      }
    }
  };

  auto add_frame = [&](Micros t) {
    GrayImage img(w, h);
    img.pixels = intensity8;
    out.frames.push_back({t, std::move(img)});
    out.masks.push_back({t, GrayImage(w, h)});
  };
  // Masks accumulate coverage of every sim step inside their interval.
  auto mark_masks = [&](Micros t, const std::vector<int>& cover) {
    for (auto& m : out.masks) {
      if (t < m.timestamp || t > m.timestamp + config.frame_interval) continue;
      for (std::size_t i = 0; i < n_pix; ++i) {
        if (cover[i] != 0) m.ids.pixels[i] = static_cast<std::uint8_t>(cover[i]);
      }
    }
  };

  render(0, log_prev, cover_prev);
  reference = log_prev;
  add_frame(0);
  mark_masks(0, cover_prev);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double noise_mean = config.noise_rate * static_cast<double>(n_pix) * static_cast<double>(dt) * 1e-6;

  struct Tagged {
    Event e;
    EventLabel l;
  };
  std::vector<Tagged> step_events;
  std::vector<Tagged> all;

  for (Micros t1 = dt; t1 <= config.duration; t1 += dt) {
    const Micros t0 = t1 - dt;
    render(t1, log_cur, cover_cur);
    if (t1 < config.duration && t1 % config.frame_interval == 0) add_frame(t1);
    mark_masks(t1, cover_cur);

    step_events.clear();
    for (std::size_t i = 0; i < n_pix; ++i) {
      const double a = log_prev[i], b = log_cur[i];
      double& ref = reference[i];
      if (std::abs(b - ref) < C) continue;
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      const int id = cover_cur[i] != 0 ? cover_cur[i] : cover_prev[i];
      const EventLabel label{id != 0 ? 1 : 0, id};
      const int pol = b > ref ? 1 : -1;
      while (pol * (b - ref) >= C) {
        ref += pol * C;
        const double frac = b == a ? 1.0 : std::clamp((ref - a) / (b - a), 0.0, 1.0);
        Micros t = t0 + static_cast<Micros>(std::floor(frac * static_cast<double>(dt)));
        t = std::clamp(t, t0, t1 - 1);
        step_events.push_back({{t, x, y, pol}, label});
      }
    }
    if (noise_mean > 0.0) {
      std::poisson_distribution<int> count(noise_mean);
      const int n = count(rng);
      for (int j = 0; j < n; ++j) {
        const int x = std::min(w - 1, static_cast<int>(unit(rng) * w));
        const int y = std::min(h - 1, static_cast<int>(unit(rng) * h));
        const Micros t = std::min(t1 - 1, t0 + static_cast<Micros>(unit(rng) * static_cast<double>(dt)));
        const int pol = unit(rng) < 0.5 ? -1 : 1;
        step_events.push_back({{t, x, y, pol}, {0, 0}});
      }
    }
    std::stable_sort(step_events.begin(), step_events.end(),
                     [](const Tagged& p, const Tagged& q) { return p.e.t < q.e.t; });
    all.insert(all.end(), step_events.begin(), step_events.end());
    std::swap(log_prev, log_cur);
    std::swap(cover_prev, cover_cur);
  }

  out.events.reserve(all.size());
  out.labels.reserve(all.size());
  for (const auto& tg : all) {
    out.events.push_back(tg.e);
    out.labels.push_back(tg.l);
  }
  return out;
}

SceneConfig random_scene(std::uint64_t seed, std::size_t objects, SensorGeometry geometry, Micros duration) {
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kPi = 3.14159265358979323846;

  SceneConfig c;
  c.geometry = geometry;
  c.duration = duration;
  c.texture_seed = splitmix(seed + 11);
  const double pan_dir = 2 * kPi * unit(rng);
  const double pan_speed = 120.0 + 60.0 * unit(rng);
  c.pan_vx = pan_speed * std::cos(pan_dir);
  c.pan_vy = pan_speed * std::sin(pan_dir);

  const double secs = static_cast<double>(duration) * 1e-6;
  const double cx = 0.5 * geometry.width, cy = 0.5 * geometry.height;
  const double span = std::min(geometry.width, geometry.height);
  for (std::size_t i = 0; i < objects; ++i) {
    SceneObject o;
    o.shape = unit(rng) < 0.5 ? ObjectShape::disc : ObjectShape::rect;
    o.width = span * (0.18 + 0.12 * unit(rng));
    o.height = o.shape == ObjectShape::disc ? o.width : span * (0.18 + 0.12 * unit(rng));
    const double dir = 2 * kPi * unit(rng);
    // Cross most of the shorter image side over the sequence.
    const double speed = 0.7 * span / secs * (0.8 + 0.4 * unit(rng));
    o.vx = speed * std::cos(dir);
    o.vy = speed * std::sin(dir);
    const double mx = cx + 0.25 * span * (unit(rng) - 0.5);
    const double my = cy + 0.25 * span * (unit(rng) - 0.5);
    o.x0 = mx - 0.5 * o.vx * secs;
    o.y0 = my - 0.5 * o.vy * secs;
    o.texture_seed = splitmix(seed * 31 + i + 101);
    c.objects.push_back(o);
  }
  return c;
}

void write_sequence(const std::filesystem::path& dir, const SynthOutput& out) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  write_events_file((dir / "events.txt").string(), out.events, out.geometry);
  write_labels_file((dir / "labels.txt").string(), out.labels);
  for (const auto& f : out.frames) write_pgm(dir / "frames" / (std::to_string(f.timestamp) + ".pgm"), f.image);
  for (const auto& m : out.masks) write_pgm(dir / "masks" / (std::to_string(m.timestamp) + ".pgm"), m.ids);
}

}  // namespace evseg
