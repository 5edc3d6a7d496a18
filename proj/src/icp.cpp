#include "evseg/icp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evseg/error.hpp"

namespace evseg {

Point2 RigidTransform2D::apply(const Point2& p) const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty};
}

namespace {

double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

}  // namespace

RigidTransform2D RigidTransform2D::compose(const RigidTransform2D& inner) const {
  const Point2 t = apply({inner.tx, inner.ty});
  return {wrap_angle(theta + inner.theta), t[0], t[1]};
}

RigidTransform2D RigidTransform2D::inverse() const {
  const double c = std::cos(theta), s = std::sin(theta);
  return {-theta, -(c * tx + s * ty), -(-s * tx + c * ty)};
}

KdTree2::KdTree2(std::span<const Point2> points) : points_(points.begin(), points.end()) {
  std::vector<std::size_t> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  if (!idx.empty()) root_ = build(idx, 0, idx.size(), 0);
}

int KdTree2::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 2;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] != points_[b][axis] ? points_[a][axis] < points_[b][axis] : a < b;
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree2::search(int node, const Point2& q, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Point2& p = points_[n.index];
  const double dx = p[0] - q[0], dy = p[1] - q[1];
  const double d2 = dx * dx + dy * dy;
  if (d2 < best_d2 || (d2 == best_d2 && n.index < best)) {
    best_d2 = d2;
    best = n.index;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::size_t KdTree2::nearest(const Point2& q) const {
  if (root_ < 0) throw SizeError("nearest-neighbour query on an empty point set");
  std::size_t best = points_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  return best;
}

RigidTransform2D fit_rigid(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.empty()) throw SizeError("rigid fit needs matching, non-empty point sets");
  const double n = static_cast<double>(src.size());
  Point2 ms{0, 0}, md{0, 0};
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms[0] += src[i][0];
    ms[1] += src[i][1];
    md[0] += dst[i][0];
    md[1] += dst[i][1];
  }
  ms = {ms[0] / n, ms[1] / n};
  md = {md[0] / n, md[1] / n};

  double sxx = 0, sxy = 0, syx = 0, syy = 0, spread = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double ax = src[i][0] - ms[0], ay = src[i][1] - ms[1];
    const double bx = dst[i][0] - md[0], by = dst[i][1] - md[1];
    sxx += ax * bx;
    sxy += ax * by;
    syx += ay * bx;
    syy += ay * by;
    spread += ax * ax + ay * ay;
  }
  RigidTransform2D t;
  if (spread > 1e-18) t.theta = std::atan2(sxy - syx, sxx + syy);
  const double c = std::cos(t.theta), s = std::sin(t.theta);
  t.tx = md[0] - (c * ms[0] - s * ms[1]);
  t.ty = md[1] - (s * ms[0] + c * ms[1]);
  return t;
}

namespace {

struct Matching {
  double cost = 0.0;  // mean truncated squared distance
  std::vector<std::size_t> target;
  std::vector<bool> inlier;
};

Matching match(std::span<const Point2> pts, const KdTree2& tree, double max_d2) {
  Matching m;
  m.target.resize(pts.size());
  m.inlier.resize(pts.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t j = tree.nearest(pts[i]);
    const Point2& q = tree.point(j);
    const double d2 = (pts[i][0] - q[0]) * (pts[i][0] - q[0]) + (pts[i][1] - q[1]) * (pts[i][1] - q[1]);
    m.target[i] = j;
    m.inlier[i] = d2 <= max_d2;
    sum += std::min(d2, max_d2);
  }
  m.cost = sum / static_cast<double>(pts.size());
  return m;
}

}  // namespace

IcpResult icp_2d(std::span<const Point2> source, std::span<const Point2> target, const IcpConfig& config) {
  if (source.empty() || target.empty()) throw SizeError("ICP needs non-empty source and target");
  const KdTree2 tree(target);
  const double max_d2 = std::isfinite(config.max_correspondence)
                            ? config.max_correspondence * config.max_correspondence
                            : std::numeric_limits<double>::infinity();

  std::vector<Point2> cur(source.begin(), source.end());
  Matching m = match(cur, tree, max_d2);
  IcpResult result;
  result.residuals.push_back(std::sqrt(m.cost));

  std::vector<Point2> a, b, next(cur.size());
  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    a.clear();
    b.clear();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!m.inlier[i]) continue;
      a.push_back(cur[i]);
      b.push_back(tree.point(m.target[i]));
    }
    if (a.empty()) break;
    const RigidTransform2D step = fit_rigid(a, b);
    for (std::size_t i = 0; i < cur.size(); ++i) next[i] = step.apply(cur[i]);
    Matching nm = match(next, tree, max_d2);
    if (nm.cost > m.cost) break;  // reject a step that would raise the residual

    result.transform = step.compose(result.transform);
    std::swap(cur, next);
    const double prev_rms = result.residuals.back();
    const double rms = std::sqrt(nm.cost);
    m = std::move(nm);
    result.residuals.push_back(rms);
    result.iterations = it + 1;
    if (prev_rms - rms < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (result.iterations < config.max_iterations && !result.converged) result.converged = true;
  return result;
}

}  // namespace evseg
