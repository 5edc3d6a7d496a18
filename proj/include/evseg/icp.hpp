#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace evseg {

using Point2 = std::array<double, 2>;

/// p -> R(theta) p + (tx, ty)
struct RigidTransform2D {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point2 apply(const Point2& p) const;
  /// (this ∘ inner)(p) = this(inner(p))
  RigidTransform2D compose(const RigidTransform2D& inner) const;
  RigidTransform2D inverse() const;
};

/// Static 2D kd-tree with exact nearest-neighbour queries; equidistant points
/// resolve to the smaller index.
class KdTree2 {
 public:
  explicit KdTree2(std::span<const Point2> points);

  std::size_t nearest(const Point2& q) const;
  std::size_t size() const { return points_.size(); }
  const Point2& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    std::size_t index;
    int axis;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Point2& q, std::size_t& best, double& best_d2) const;

  std::vector<Point2> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpConfig {
  std::size_t max_iterations = 30;
  double tolerance = 1e-4;  // stop when the RMS residual improves by less
  /// Correspondences farther than this are ignored by the fit and contribute
  /// a constant to the residual.
  double max_correspondence = std::numeric_limits<double>::infinity();
};

struct IcpResult {
  RigidTransform2D transform;
  std::vector<double> residuals;  // RMS before the first step, then after each accepted step
  std::size_t iterations = 0;
  bool converged = false;

  double final_residual() const { return residuals.back(); }
};

/// Best-fit rotation and translation mapping src[i] onto dst[i] in the least
/// squares sense. A degenerate source (all points coincident) yields a pure
/// translation.
RigidTransform2D fit_rigid(std::span<const Point2> src, std::span<const Point2> dst);

/// Point-to-point ICP aligning `source` onto `target`. Steps that would raise
/// the residual are rejected, so the residual sequence never increases.
IcpResult icp_2d(std::span<const Point2> source, std::span<const Point2> target,
                 const IcpConfig& config = {});

}  // namespace evseg
