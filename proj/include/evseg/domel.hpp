#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evseg/canny.hpp"
#include "evseg/events.hpp"
#include "evseg/icp.hpp"
#include "evseg/image.hpp"

namespace evseg {

struct DomelConfig {
  CannyConfig canny;
  IcpConfig edge_icp{30, 1e-4, 8.0};
  IcpConfig mask_icp{30, 1e-4, 1.0};  // tight: only boundary-hugging events may pull
  std::size_t rounds = 3;
};

/// Events attached to frame `frame` (interval [t_frame, t_next)).
struct FrameGroup {
  std::size_t frame = 0;
  std::vector<std::size_t> events;
};

/// Groups events by frame interval; events before the first timestamp go to
/// the first frame. Timestamps must be sorted ascending.
std::vector<FrameGroup> synchronize(std::span<const Event> events, std::span<const Micros> frame_times);

/// Nonzero pixels with a 4-neighbour of value 0.
std::vector<PixelPoint> mask_boundary(const GrayImage& ids);

struct MaskLabeling {
  std::vector<EventLabel> labels;
  RigidTransform2D edge_shift;
  RigidTransform2D mask_shift;
};

/// Aligns the events onto the frame edges, then onto the mask boundary, and
/// labels each event by the mask pixel under its aligned position.
MaskLabeling label_with_masks(std::span<const Event> events, const ObjectMask& mask,
                              std::span<const PixelPoint> edges, const DomelConfig& config = {});

/// Whole-sequence labeling. `masks` are matched to frames by timestamp (the
/// latest mask not after the frame). Labels follow event order.
std::vector<EventLabel> run_domel(std::span<const Event> events, std::span<const ApsFrame> frames,
                                  std::span<const ObjectMask> masks, const DomelConfig& config = {},
                                  std::size_t threads = 1);

}  // namespace evseg
