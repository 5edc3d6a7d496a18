#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "evseg/events.hpp"

namespace evseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

/// Positive class is foreground (1).
ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth);

/// Percentages in [0, 100]; 0/0 evaluates to 0.
struct Scores {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

Scores scores(const ConfusionCounts& counts);

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

enum class MaskSource { convex_hull, labels };

struct SegMask {
  SensorGeometry geometry;
  std::vector<std::uint8_t> bits;
  MaskSource source = MaskSource::convex_hull;

  explicit SegMask(SensorGeometry g = {}, MaskSource s = MaskSource::convex_hull)
      : geometry(g), bits(static_cast<std::size_t>(g.width) * g.height, 0), source(s) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * geometry.width + x] != 0; }
  void set(int x, int y) { bits[static_cast<std::size_t>(y) * geometry.width + x] = 1; }
  std::size_t count() const;
};

/// Counter-clockwise hull without collinear points (monotone chain).
std::vector<PixelPoint> convex_hull(std::span<const PixelPoint> points);

/// Pixels whose centers lie inside or on the convex hull of `points`. A hull
/// of one point marks that pixel; a collinear hull marks the rasterised
/// segment between its extreme points.
SegMask hull_mask(std::span<const PixelPoint> points, const SensorGeometry& geometry);

/// |A∩B| / |A∪B|; two empty masks score 1.
double iou(const SegMask& a, const SegMask& b);

/// Inclusive pixel box.
struct DetectionBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  std::int64_t area() const {
    return static_cast<std::int64_t>(x_max - x_min + 1) * (y_max - y_min + 1);
  }
};

std::optional<DetectionBox> bounding_box(std::span<const PixelPoint> points);
std::int64_t intersection_area(const DetectionBox& a, const DetectionBox& b);

/// |D∩G| / |G|.
double box_overlap(const DetectionBox& detected, const DetectionBox& truth);

/// Overlap above one half and more of the detection inside the ground truth
/// than outside it.
bool detection_success(const DetectionBox& detected, const DetectionBox& truth);

struct DetectionResult {
  std::size_t successes = 0;
  std::size_t truths = 0;
  std::vector<int> matched_detection;  // per truth box, -1 when unmatched

  double rate() const { return truths == 0 ? 0.0 : 100.0 * successes / truths; }
};

/// One-to-one greedy matching by decreasing overlap.
DetectionResult detection_rate(std::span<const DetectionBox> detected,
                               std::span<const DetectionBox> truth);

/// Foreground boxes of one window, one per object id. Events whose label
/// carries no id (0) are grouped together.
std::vector<DetectionBox> object_boxes(std::span<const Event> events, std::span<const int> labels,
                                       std::span<const int> object_ids);

struct WindowReport {
  std::size_t window_id = 0;
  double iou = 0.0;
  DetectionResult detection;
  ConfusionCounts counts;
};

struct EvaluationReport {
  std::vector<WindowReport> windows;
  ConfusionCounts counts;

  double mean_iou() const;
  std::size_t detection_successes() const;
  std::size_t detection_truths() const;
  double detection_rate() const;
  Scores event_scores() const { return scores(counts); }

  /// "window_id,iou,dr_success,tp,fp,tn,fn" plus a trailing summary row.
  void write_csv(std::ostream& out) const;
};

/// Scores one window. `predicted` and `truth` are per-event, in window order;
/// boxes on either side are split by object id.
WindowReport evaluate_window(std::size_t window_id, std::span<const Event> events,
                             std::span<const EventLabel> predicted, std::span<const EventLabel> truth,
                             const SensorGeometry& geometry);

}  // namespace evseg
