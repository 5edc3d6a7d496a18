#include "evseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include "evseg/error.hpp"

namespace evseg {

MetricConfig MetricConfig::automatic(const SensorGeometry& geometry, Micros window_duration) {
  if (window_duration <= 0) throw SizeError("window duration must be positive");
  return {static_cast<double>(std::max(geometry.width, geometry.height)) /
          static_cast<double>(window_duration)};
}

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dt = a[2] - b[2];
  return dx * dx + dy * dy + dt * dt;
}

double spatiotemporal_distance(const Point3& a, const Point3& b) {
  return std::sqrt(squared_distance(a, b));
}

namespace {

using Candidate = std::pair<double, std::size_t>;

void select_k(std::vector<Candidate>& candidates, std::size_t k, std::size_t* out) {
  auto nth = candidates.begin() + static_cast<std::ptrdiff_t>(k);
  if (k < candidates.size()) std::nth_element(candidates.begin(), nth, candidates.end());
  std::sort(candidates.begin(), nth);
  for (std::size_t i = 0; i < k; ++i) out[i] = candidates[i].second;
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(std::span<const Point3> reference,
                                           std::span<const Point3> queries, std::size_t k) {
  if (k > reference.size()) {
    throw SizeError("cannot take " + std::to_string(k) + " neighbors from " +
                    std::to_string(reference.size()) + " points");
  }
  std::vector<std::size_t> out(queries.size() * k);
  std::vector<Candidate> candidates(reference.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      candidates[j] = {squared_distance(queries[q], reference[j]), j};
    }
    select_k(candidates, k, out.data() + q * k);
  }
  return out;
}

std::vector<std::size_t> knn_self(std::span<const Point3> positions, std::size_t k) {
  const std::size_t n = positions.size();
  if (n <= k) {
    throw SizeError("insufficient nodes: need more than k=" + std::to_string(k) + ", have " +
                    std::to_string(n));
  }
  std::vector<std::size_t> out(n * k);
  std::vector<Candidate> candidates;
  candidates.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.emplace_back(squared_distance(positions[i], positions[j]), j);
    }
    select_k(candidates, k, out.data() + i * k);
  }
  return out;
}

EventGraph build_knn_graph(const EventWindow& window, std::size_t k, const MetricConfig& metric,
                           const SensorGeometry& geometry) {
  if (metric.time_scale <= 0.0) throw SizeError("time_scale must be positive");
  const std::size_t n = window.events.size();
  if (n <= k) {
    throw SizeError("insufficient nodes: window has " + std::to_string(n) +
                    " events, k=" + std::to_string(k));
  }
  EventGraph g;
  g.k = k;
  g.positions.reserve(n);
  g.features = Tensor::matrix(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Event& e = window.events[i];
    if (!geometry.contains(e.x, e.y)) throw BoundsError("event outside sensor geometry");
    Point3 p{static_cast<double>(e.x), static_cast<double>(e.y),
             static_cast<double>(e.t - window.t_start) * metric.time_scale};
    g.positions.push_back(p);
    for (std::size_t c = 0; c < 3; ++c) g.features(i, c) = p[c];
  }
  g.neighbors = knn_self(g.positions, k);
  return g;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> positions, std::size_t m) {
  const std::size_t n = positions.size();
  if (m < 1 || m > n) {
    throw SizeError("farthest point sampling needs 1 <= m <= N (m=" + std::to_string(m) +
                    ", N=" + std::to_string(n) + ")");
  }
  std::size_t seed = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (positions[i][2] < positions[seed][2]) seed = i;
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(m);
  chosen.push_back(seed);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[seed] = 1;
  std::size_t last = seed;
  while (chosen.size() < m) {
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], squared_distance(positions[i], positions[last]));
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    taken[best] = 1;
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

void write_edge_list(std::ostream& out, const EventGraph& graph) {
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j : graph.neighbors_of(i)) {
      out << i << ' ' << j << ' ' << spatiotemporal_distance(graph.positions[i], graph.positions[j])
          << '\n';
    }
  }
}

}  // namespace evseg
