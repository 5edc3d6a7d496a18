#include "evseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <ostream>

#include "evseg/error.hpp"

namespace evseg {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1;
    const bool t = truth[i] == 1;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Scores scores(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  Scores s;
  const double tp = static_cast<double>(c.tp);
  s.recall = 100.0 * ratio(tp, tp + static_cast<double>(c.fn));
  s.precision = 100.0 * ratio(tp, tp + static_cast<double>(c.fp));
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

std::size_t SegMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

std::int64_t cross(const PixelPoint& o, const PixelPoint& a, const PixelPoint& b) {
  return static_cast<std::int64_t>(a.x - o.x) * (b.y - o.y) -
         static_cast<std::int64_t>(a.y - o.y) * (b.x - o.x);
}

}  // namespace

std::vector<PixelPoint> convex_hull(std::span<const PixelPoint> points) {
  std::vector<PixelPoint> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const PixelPoint& a, const PixelPoint& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;

  std::vector<PixelPoint> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

SegMask hull_mask(std::span<const PixelPoint> points, const SensorGeometry& geometry) {
  SegMask mask(geometry, MaskSource::convex_hull);
  for (const auto& p : points) {
    if (!geometry.contains(p.x, p.y)) {
      throw BoundsError("hull point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                        ") outside sensor");
    }
  }
  const auto hull = convex_hull(points);
  if (hull.empty()) return mask;

  int x0 = hull[0].x, x1 = hull[0].x, y0 = hull[0].y, y1 = hull[0].y;
  for (const auto& p : hull) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }

  if (hull.size() < 3) {
    // Point or segment: one pixel per step along the major axis, the minor
    // coordinate rounded half up.
    const PixelPoint a = hull.front();
    const PixelPoint b = hull.back();
    const int dx = b.x - a.x, dy = b.y - a.y;
    const int steps = std::max(std::abs(dx), std::abs(dy));
    if (steps == 0) {
      mask.set(a.x, a.y);
      return mask;
    }
    for (int s = 0; s <= steps; ++s) {
      const int x = a.x + static_cast<int>(std::floor(static_cast<double>(s) * dx / steps + 0.5));
      const int y = a.y + static_cast<int>(std::floor(static_cast<double>(s) * dy / steps + 0.5));
      mask.set(x, y);
    }
    return mask;
  }

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const PixelPoint p{x, y};
      bool inside = true;
      for (std::size_t i = 0; i < hull.size() && inside; ++i) {
        inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0;
      }
      if (inside) mask.set(x, y);
    }
  }
  return mask;
}

double iou(const SegMask& a, const SegMask& b) {
  if (a.geometry.width != b.geometry.width || a.geometry.height != b.geometry.height) {
    throw ShapeError("iou of masks with different geometry");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<DetectionBox> bounding_box(std::span<const PixelPoint> points) {
  if (points.empty()) return std::nullopt;
  DetectionBox b{points[0].x, points[0].y, points[0].x, points[0].y};
  for (const auto& p : points) {
    b.x_min = std::min(b.x_min, p.x);
    b.y_min = std::min(b.y_min, p.y);
    b.x_max = std::max(b.x_max, p.x);
    b.y_max = std::max(b.y_max, p.y);
  }
  return b;
}

std::int64_t intersection_area(const DetectionBox& a, const DetectionBox& b) {
  const std::int64_t w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  const std::int64_t h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min) + 1;
  return w > 0 && h > 0 ? w * h : 0;
}

double box_overlap(const DetectionBox& detected, const DetectionBox& truth) {
  return static_cast<double>(intersection_area(detected, truth)) / static_cast<double>(truth.area());
}

bool detection_success(const DetectionBox& detected, const DetectionBox& truth) {
  const std::int64_t inter = intersection_area(detected, truth);
  return box_overlap(detected, truth) > 0.5 && inter > detected.area() - inter;
}

DetectionResult detection_rate(std::span<const DetectionBox> detected,
                               std::span<const DetectionBox> truth) {
  struct Candidate {
    double overlap;
    std::size_t d, g;
  };
  std::vector<Candidate> cands;
  for (std::size_t g = 0; g < truth.size(); ++g) {
    for (std::size_t d = 0; d < detected.size(); ++d) {
      if (detection_success(detected[d], truth[g])) cands.push_back({box_overlap(detected[d], truth[g]), d, g});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.overlap > b.overlap; });
  DetectionResult r;
  r.truths = truth.size();
  r.matched_detection.assign(truth.size(), -1);
  std::vector<bool> used(detected.size(), false);
  for (const auto& c : cands) {
    if (used[c.d] || r.matched_detection[c.g] >= 0) continue;
    used[c.d] = true;
    r.matched_detection[c.g] = static_cast<int>(c.d);
    ++r.successes;
  }
  return r;
}

std::vector<DetectionBox> object_boxes(std::span<const Event> events, std::span<const int> labels,
                                       std::span<const int> object_ids) {
  std::map<int, std::vector<PixelPoint>> groups;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (labels[i] != 1) continue;
    const int id = object_ids.empty() ? 0 : object_ids[i];
    groups[id].push_back({events[i].x, events[i].y});
  }
  std::vector<DetectionBox> out;
  for (const auto& [id, pts] : groups) out.push_back(*bounding_box(pts));
  return out;
}

double EvaluationReport::mean_iou() const {
  if (windows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& w : windows) s += w.iou;
  return s / static_cast<double>(windows.size());
}

std::size_t EvaluationReport::detection_successes() const {
  std::size_t s = 0;
  for (const auto& w : windows) s += w.detection.successes;
  return s;
}

std::size_t EvaluationReport::detection_truths() const {
  std::size_t s = 0;
  for (const auto& w : windows) s += w.detection.truths;
  return s;
}

double EvaluationReport::detection_rate() const {
  const std::size_t t = detection_truths();
  return t == 0 ? 0.0 : 100.0 * static_cast<double>(detection_successes()) / static_cast<double>(t);
}

void EvaluationReport::write_csv(std::ostream& out) const {
  out << "window_id,iou,dr_success,tp,fp,tn,fn\n";
  for (const auto& w : windows) {
    out << w.window_id << ',' << w.iou << ',' << w.detection.successes << ',' << w.counts.tp << ','
        << w.counts.fp << ',' << w.counts.tn << ',' << w.counts.fn << '\n';
  }
  out << "summary," << mean_iou() << ',' << detection_rate() << ',' << counts.tp << ',' << counts.fp
      << ',' << counts.tn << ',' << counts.fn << '\n';
}

WindowReport evaluate_window(std::size_t window_id, std::span<const Event> events,
                             std::span<const EventLabel> predicted, std::span<const EventLabel> truth,
                             const SensorGeometry& geometry) {
  if (predicted.size() != events.size() || truth.size() != events.size()) {
    throw ShapeError("window " + std::to_string(window_id) + ": label count does not match events");
  }
  const std::size_t n = events.size();
  std::vector<int> pred_labels(n), pred_ids(n), truth_labels(n), truth_ids(n);
  std::vector<PixelPoint> pred_pts, truth_pts;
  for (std::size_t i = 0; i < n; ++i) {
    pred_labels[i] = predicted[i].label;
    pred_ids[i] = predicted[i].object_id;
    truth_labels[i] = truth[i].label;
    truth_ids[i] = truth[i].object_id;
    if (predicted[i].label == 1) pred_pts.push_back({events[i].x, events[i].y});
    if (truth[i].label == 1) truth_pts.push_back({events[i].x, events[i].y});
  }
  WindowReport r;
  r.window_id = window_id;
  r.counts = confusion(pred_labels, truth_labels);
  r.iou = iou(hull_mask(pred_pts, geometry), hull_mask(truth_pts, geometry));
  const auto detected = object_boxes(events, pred_labels, pred_ids);
  const auto truth_boxes = object_boxes(events, truth_labels, truth_ids);
  r.detection = detection_rate(detected, truth_boxes);
  return r;
}

}  // namespace evseg
