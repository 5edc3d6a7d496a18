#include "evseg/domel.hpp"

#include <algorithm>
#include <cmath>

#include "evseg/error.hpp"
#include "evseg/parallel.hpp"

namespace evseg {

std::vector<FrameGroup> synchronize(std::span<const Event> events, std::span<const Micros> frame_times) {
  if (frame_times.empty()) throw SyncError("no frames to synchronize events with");
  if (!std::is_sorted(frame_times.begin(), frame_times.end())) {
    throw SyncError("frame timestamps are not sorted");
  }
  std::vector<FrameGroup> groups(frame_times.size());
  for (std::size_t f = 0; f < groups.size(); ++f) groups[f].frame = f;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto it = std::upper_bound(frame_times.begin(), frame_times.end(), events[i].t);
    const std::size_t f = it == frame_times.begin() ? 0 : static_cast<std::size_t>(it - frame_times.begin()) - 1;
    groups[f].events.push_back(i);
  }
  return groups;
}

std::vector<PixelPoint> mask_boundary(const GrayImage& ids) {
  std::vector<PixelPoint> out;
  for (int y = 0; y < ids.height; ++y) {
    for (int x = 0; x < ids.width; ++x) {
      if (ids.at(x, y) == 0) continue;
      const bool edge = (x > 0 && ids.at(x - 1, y) == 0) || (x + 1 < ids.width && ids.at(x + 1, y) == 0) ||
                        (y > 0 && ids.at(x, y - 1) == 0) || (y + 1 < ids.height && ids.at(x, y + 1) == 0);
      if (edge) out.push_back({x, y});
    }
  }
  return out;
}

namespace {

std::vector<Point2> to_points(std::span<const PixelPoint> pixels) {
  std::vector<Point2> out;
  out.reserve(pixels.size());
  for (const auto& p : pixels) out.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
  return out;
}

// Repeated ICP rounds from the current positions; returns the accumulated shift.
RigidTransform2D align(std::vector<Point2>& pts, std::span<const Point2> target, const IcpConfig& icp,
                       std::size_t rounds) {
  RigidTransform2D total;
  if (pts.empty() || target.empty()) return total;
  for (std::size_t r = 0; r < rounds; ++r) {
    const IcpResult res = icp_2d(pts, target, icp);
    if (res.iterations == 0) break;
    for (auto& p : pts) p = res.transform.apply(p);
    total = res.transform.compose(total);
  }
  return total;
}

}  // namespace

MaskLabeling label_with_masks(std::span<const Event> events, const ObjectMask& mask,
                              std::span<const PixelPoint> edges, const DomelConfig& config) {
  MaskLabeling out;
  out.labels.assign(events.size(), EventLabel{0, 0});
  const auto boundary = mask_boundary(mask.ids);
  if (events.empty() || boundary.empty()) return out;

  std::vector<Point2> pts;
  pts.reserve(events.size());
  for (const auto& e : events) pts.push_back({static_cast<double>(e.x), static_cast<double>(e.y)});

  out.edge_shift = align(pts, to_points(edges), config.edge_icp, config.rounds);
  out.mask_shift = align(pts, to_points(boundary), config.mask_icp, config.rounds);

  for (std::size_t i = 0; i < pts.size(); ++i) {
    const int x = static_cast<int>(std::lround(pts[i][0]));
    const int y = static_cast<int>(std::lround(pts[i][1]));
    if (!mask.ids.contains(x, y)) continue;
    const int id = mask.ids.at(x, y);
    if (id != 0) out.labels[i] = EventLabel{1, id};
  }
  return out;
}

std::vector<EventLabel> run_domel(std::span<const Event> events, std::span<const ApsFrame> frames,
                                  std::span<const ObjectMask> masks, const DomelConfig& config,
                                  std::size_t threads) {
  if (masks.empty()) throw SyncError("no object masks supplied");
  std::vector<Micros> times;
  for (const auto& f : frames) times.push_back(f.timestamp);
  const auto groups = synchronize(events, times);

  std::vector<EventLabel> labels(events.size(), EventLabel{0, 0});
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const FrameGroup& group = groups[g];
    if (group.events.empty()) return;
    const ApsFrame& frame = frames[group.frame];
    auto it = std::upper_bound(masks.begin(), masks.end(), frame.timestamp,
                               [](Micros t, const ObjectMask& m) { return t < m.timestamp; });
    const ObjectMask& mask = it == masks.begin() ? masks.front() : *(it - 1);
    if (mask.ids.width != frame.image.width || mask.ids.height != frame.image.height) {
      throw SyncError("mask at " + std::to_string(mask.timestamp) + " does not match frame geometry");
    }

    std::vector<Event> subset;
    subset.reserve(group.events.size());
    for (std::size_t i : group.events) subset.push_back(events[i]);
    const auto edges = canny_edges(frame.image, config.canny);
    const MaskLabeling res = label_with_masks(subset, mask, edges, config);
    for (std::size_t j = 0; j < group.events.size(); ++j) labels[group.events[j]] = res.labels[j];
  });
  return labels;
}

}  // namespace evseg
