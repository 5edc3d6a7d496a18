#include "evseg/pipeline.hpp"

#include <algorithm>
#include <climits>
#include <filesystem>
#include <sstream>

#include "evseg/error.hpp"
#include "evseg/parallel.hpp"

namespace evseg {

MetricConfig WindowingConfig::metric(const SensorGeometry& geometry) const {
  if (time_scale) return MetricConfig{*time_scale};
  return MetricConfig::automatic(geometry, window);
}

KeyValueConfig WindowingConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("window_us", std::to_string(window));
  kv.set("n_max", std::to_string(n_max));
  if (time_scale) {
    std::ostringstream s;
    s.precision(17);
    s << *time_scale;
    kv.set("time_scale", s.str());
  } else {
    kv.set("time_scale", "auto");
  }
  return kv;
}

WindowingConfig WindowingConfig::from_kv(const KeyValueConfig& kv) { return from_kv(kv, WindowingConfig{}); }

WindowingConfig WindowingConfig::from_kv(const KeyValueConfig& kv, WindowingConfig base) {
  base.window = kv.get_int("window_us", base.window);
  base.n_max = static_cast<std::size_t>(kv.get_int("n_max", static_cast<long long>(base.n_max)));
  base.k = static_cast<std::size_t>(kv.get_int("k", static_cast<long long>(base.k)));
  const std::string ts = kv.get_string("time_scale", "auto");
  if (ts == "auto" || ts == "AUTO") {
    base.time_scale.reset();
  } else {
    base.time_scale = kv.get_double("time_scale", 1.0);
  }
  return base;
}

std::size_t min_window_events(const GtnnConfig& config) {
  // The input graph needs more than k nodes; each level keeps ceil(n / rate)
  // nodes and needs at least two of them.
  for (std::size_t n = config.k + 1;; ++n) {
    std::size_t p = n;
    bool ok = true;
    for (std::size_t s = 0; s < kStages && ok; ++s) {
      p = (p + config.down_rates[s] - 1) / config.down_rates[s];
      ok = p >= 2;
    }
    if (ok) return n;
  }
}

std::vector<EventLabel> predict_stream(const GtnnModel& model, const std::vector<Event>& events,
                                       const SensorGeometry& geometry, const WindowingConfig& windowing,
                                       std::size_t threads) {
  std::vector<EventLabel> out(events.size(), EventLabel{0, 0});
  const auto windows = slice_windows(events, windowing.window, windowing.n_max);
  const MetricConfig metric = windowing.metric(geometry);
  const std::size_t min_events = min_window_events(model.config());
  parallel_for(windows.size(), threads, [&](std::size_t w) {
    const EventWindow& win = windows[w];
    if (win.events.size() < min_events) return;
    const EventGraph graph = build_knn_graph(win, model.config().k, metric, geometry);
    const auto labels = predicted_labels(predict_probabilities(model, graph));
    for (std::size_t i = 0; i < labels.size(); ++i) out[win.source_index[i]] = EventLabel{labels[i], 0};
  });
  return out;
}

std::vector<Sample> build_samples(const std::vector<Event>& events, const std::vector<EventLabel>& labels,
                                  const SensorGeometry& geometry, const WindowingConfig& windowing,
                                  const GtnnConfig& config, std::size_t threads) {
  if (labels.size() != events.size()) {
    throw ShapeError(std::to_string(labels.size()) + " labels for " + std::to_string(events.size()) + " events");
  }
  auto windows = slice_windows(events, windowing.window, windowing.n_max);
  const std::size_t min_events = min_window_events(config);
  std::erase_if(windows, [&](const EventWindow& w) { return w.events.size() < min_events; });
  const MetricConfig metric = windowing.metric(geometry);
  std::vector<Sample> out(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t w) {
    const EventWindow& win = windows[w];
    std::vector<int> y(win.events.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = labels[win.source_index[i]].label;
    out[w] = make_sample(build_knn_graph(win, config.k, metric, geometry), std::move(y), config);
  });
  return out;
}

EvaluationReport evaluate_stream(const std::vector<Event>& events, std::span<const EventLabel> predicted,
                                 std::span<const EventLabel> truth, const SensorGeometry& geometry,
                                 Micros window, std::size_t n_max) {
  if (predicted.size() != events.size() || truth.size() != events.size()) {
    throw ShapeError("evaluation needs one prediction and one label per event (" +
                     std::to_string(events.size()) + " events, " + std::to_string(predicted.size()) +
                     " predictions, " + std::to_string(truth.size()) + " labels)");
  }
  EvaluationReport report;
  const auto windows = slice_windows(events, window, n_max);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const EventWindow& win = windows[w];
    if (win.events.empty()) continue;
    std::vector<EventLabel> p, g;
    for (std::size_t idx : win.source_index) {
      p.push_back(predicted[idx]);
      g.push_back(truth[idx]);
    }
    report.windows.push_back(evaluate_window(w, win.events, p, g, geometry));
    report.counts += report.windows.back().counts;
  }
  return report;
}

SensorGeometry resolve_geometry(const std::string& events_path, std::optional<int> width,
                                std::optional<int> height) {
  if (width && height) return {*width, *height};
  SensorGeometry g;
  if (auto hint = read_geometry_hint(events_path)) {
    g = *hint;
  } else {
    const auto events = read_events_file(events_path, {INT_MAX, INT_MAX});
    for (const auto& e : events) {
      g.width = std::max(g.width, e.x + 1);
      g.height = std::max(g.height, e.y + 1);
    }
  }
  if (width) g.width = *width;
  if (height) g.height = *height;
  if (g.width <= 0 || g.height <= 0) throw Error("cannot determine sensor geometry for " + events_path);
  return g;
}

}  // namespace evseg
