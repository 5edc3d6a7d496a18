#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "evseg/events.hpp"
#include "evseg/tensor.hpp"

namespace evseg {

using Point3 = std::array<double, 3>;

/// Maps microseconds onto the pixel axis so spatial and temporal offsets
/// share one Euclidean metric.
struct MetricConfig {
  double time_scale = 1.0;  // pixels per microsecond

  /// One window duration spans max(W, H) pixels.
  static MetricConfig automatic(const SensorGeometry& geometry, Micros window_duration);
};

/// Events embedded in (x, y, t_scaled) with directed kNN neighborhoods.
/// `neighbors` is row-major N x k and never lists a node as its own neighbor.
struct EventGraph {
  std::vector<Point3> positions;
  Tensor features;  // N x 3, initially equal to positions
  std::vector<std::size_t> neighbors;
  std::size_t k = 0;

  std::size_t size() const { return positions.size(); }
  std::span<const std::size_t> neighbors_of(std::size_t i) const {
    return {neighbors.data() + i * k, k};
  }
};

double spatiotemporal_distance(const Point3& a, const Point3& b);
double squared_distance(const Point3& a, const Point3& b);

/// Exact k nearest `reference` points for every query, ordered by distance
/// with ties going to the smaller reference index. Row-major |queries| x k.
std::vector<std::size_t> nearest_neighbors(std::span<const Point3> reference,
                                           std::span<const Point3> queries, std::size_t k);

/// Exact kNN of every point among the others (self excluded). Requires N > k.
std::vector<std::size_t> knn_self(std::span<const Point3> positions, std::size_t k);

EventGraph build_knn_graph(const EventWindow& window, std::size_t k, const MetricConfig& metric,
                           const SensorGeometry& geometry);

/// Greedy max-min-distance subset. Seeded at the earliest node (smallest
/// t_scaled, then smallest index); later ties go to the smallest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> positions, std::size_t m);

/// Debug dump, one directed edge per line: "i j distance".
void write_edge_list(std::ostream& out, const EventGraph& graph);

}  // namespace evseg
