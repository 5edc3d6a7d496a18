#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evseg/events.hpp"
#include "evseg/graph.hpp"
#include "evseg/gtnn.hpp"
#include "evseg/kv_config.hpp"
#include "evseg/metrics.hpp"
#include "evseg/training.hpp"

namespace evseg {

/// How a stream is cut into windows and turned into graphs.
struct WindowingConfig {
  Micros window = 10000;
  std::size_t n_max = 5000;
  std::size_t k = 16;
  std::optional<double> time_scale;  // pixels per microsecond; automatic when empty

  MetricConfig metric(const SensorGeometry& geometry) const;
  /// Keys window_us, n_max, time_scale (k belongs to the model config).
  KeyValueConfig to_kv() const;
  static WindowingConfig from_kv(const KeyValueConfig& kv);
  static WindowingConfig from_kv(const KeyValueConfig& kv, WindowingConfig base);
};

/// Smallest window the model accepts for a given config.
std::size_t min_window_events(const GtnnConfig& config);

/// Per-event predictions for a whole stream. Events outside the per-window
/// cap and windows too small for the model are labeled background.
std::vector<EventLabel> predict_stream(const GtnnModel& model, const std::vector<Event>& events,
                                       const SensorGeometry& geometry, const WindowingConfig& windowing,
                                       std::size_t threads = 1);

/// Training samples, one per window with enough events.
std::vector<Sample> build_samples(const std::vector<Event>& events, const std::vector<EventLabel>& labels,
                                  const SensorGeometry& geometry, const WindowingConfig& windowing,
                                  const GtnnConfig& config, std::size_t threads = 1);

/// Scores the events kept by the windowing cap, window by window. Windows
/// without any kept event are skipped.
EvaluationReport evaluate_stream(const std::vector<Event>& events, std::span<const EventLabel> predicted,
                                 std::span<const EventLabel> truth, const SensorGeometry& geometry,
                                 Micros window, std::size_t n_max);

/// Flag value over file hint over the extent of the events themselves.
SensorGeometry resolve_geometry(const std::string& events_path, std::optional<int> width,
                                std::optional<int> height);

}  // namespace evseg
