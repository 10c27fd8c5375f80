#include "poseval/metrics.hpp"

#include "poseval/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace poseval {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double angle_between_unit(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * kRadToDeg;
}

void require_vertices(std::span<const Vec3> vertices) {
  if (vertices.empty()) throw Error(ErrorKind::InvalidArgument, "metric evaluation needs at least one vertex");
}

constexpr std::size_t kLeafSize = 8;

}  // namespace

RigidTransform continuous_symmetry_step(const ContinuousSymmetry& c, double angle_deg) {
  const Mat3 r = axis_angle(c.axis, angle_deg);
  return RigidTransform::nearest(r, c.offset - r * c.offset);
}

std::vector<RigidTransform> effective_symmetries(const SymmetrySpec& sym, int steps) {
  if (sym.continuous_axes.empty()) return sym.discrete;
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "continuous symmetry needs at least one step");
  std::vector<RigidTransform> out;
  out.reserve(sym.continuous_axes.size() * static_cast<std::size_t>(steps) * sym.discrete.size());
  for (const auto& axis : sym.continuous_axes) {
    for (int k = 0; k < steps; ++k) {
      const auto step = continuous_symmetry_step(axis, 360.0 * k / steps);
      for (const auto& s : sym.discrete) out.push_back(step * s);
    }
  }
  return out;
}

double rotation_error(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym) {
  const Mat3& r_est = est.rotation();
  const Mat3& r_gt = gt.rotation();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : sym.discrete) best = std::min(best, geodesic_angle(r_est * s.rotation(), r_gt));
  // Axis deviation; the discrete set may flip the axis, so it is applied on
  // the ground-truth side to keep the result gauge invariant.
  for (const auto& c : sym.continuous_axes) {
    const Vec3 est_axis = r_est * c.axis;
    for (const auto& s : sym.discrete) {
      best = std::min(best, angle_between_unit(r_gt * (s.rotation() * c.axis), est_axis));
    }
  }
  return best;
}

TranslationError translation_error(const RigidTransform& est, const RigidTransform& gt) {
  const Vec3 d = est.translation() - gt.translation();
  return {d.norm(), std::abs(d.z())};
}

double mssd(const RigidTransform& est, const RigidTransform& gt, std::span<const RigidTransform> symmetries,
            std::span<const Vec3> vertices) {
  require_vertices(vertices);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : symmetries) {
    const RigidTransform gt_s = gt * s;
    double worst_sq = 0;
    for (const auto& x : vertices) {
      worst_sq = std::max(worst_sq, (est.apply(x) - gt_s.apply(x)).squaredNorm());
      if (worst_sq >= best * best) break;
    }
    best = std::min(best, std::sqrt(worst_sq));
  }
  return best;
}

double mssd(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
            std::span<const Vec3> vertices) {
  const auto syms = effective_symmetries(sym);
  return mssd(est, gt, syms, vertices);
}

double mspd(const RigidTransform& est, const RigidTransform& gt, std::span<const RigidTransform> symmetries,
            std::span<const Vec3> vertices, const CameraIntrinsics& k) {
  require_vertices(vertices);
  std::vector<Vec2> est_px(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec3 p = est.apply(vertices[i]);
    if (!(p.z() > 0)) throw NonPositiveDepthError(i, p.z());
    est_px[i] = project(k, p);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : symmetries) {
    const RigidTransform gt_s = gt * s;
    double worst_sq = 0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Vec3 p = gt_s.apply(vertices[i]);
      if (!(p.z() > 0)) throw NonPositiveDepthError(i, p.z());
      worst_sq = std::max(worst_sq, (est_px[i] - project(k, p)).squaredNorm());
    }
    best = std::min(best, std::sqrt(worst_sq));
  }
  return best;
}

double mspd(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
            std::span<const Vec3> vertices, const CameraIntrinsics& k) {
  const auto syms = effective_symmetries(sym);
  return mspd(est, gt, syms, vertices, k);
}

NearestNeighborIndex::NearestNeighborIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw Error(ErrorKind::InvalidArgument, "nearest-neighbour index needs points");
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, points_.size());
}

int NearestNeighborIndex::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)] = {-1, 0, -1, -1, begin, end};
    return id;
  }
  Vec3 lo = points_[begin], hi = points_[begin];
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[i]);
    hi = hi.cwiseMax(points_[i]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  const auto first = points_.begin() + static_cast<std::ptrdiff_t>(begin);
  std::nth_element(first, points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(end),
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const double split = points_[mid][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)] = {axis, split, left, right, begin, end};
  return id;
}

void NearestNeighborIndex::search(int node_id, const Vec3& q, double& best_sq) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) best_sq = std::min(best_sq, (points_[i] - q).squaredNorm());
    return;
  }
  // Points equal to the split value may sit on either side, so the far side
  // is pruned only on strict inequality.
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, q, best_sq);
  if (diff * diff <= best_sq) search(far, q, best_sq);
}

double NearestNeighborIndex::nearest_distance(const Vec3& query) const {
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, query, best_sq);
  return std::sqrt(best_sq);
}

namespace {

double add_trivial(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> vertices) {
  double sum = 0;
  for (const auto& x : vertices) sum += (est.apply(x) - gt.apply(x)).norm();
  return sum / static_cast<double>(vertices.size());
}

// Distances are measured in the model frame: |T^-1 T_est x - y| = |T_est x - T y|.
double adi(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> vertices,
           const NearestNeighborIndex& index) {
  const RigidTransform to_model = inverse(gt) * est;
  double sum = 0;
  for (const auto& x : vertices) sum += index.nearest_distance(to_model.apply(x));
  return sum / static_cast<double>(vertices.size());
}

}  // namespace

double add_s(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
             std::span<const Vec3> vertices) {
  require_vertices(vertices);
  if (sym.trivial()) return add_trivial(est, gt, vertices);
  const NearestNeighborIndex index(vertices);
  return adi(est, gt, vertices, index);
}

MetricEvaluator::MetricEvaluator(const ObjectModel& model)
    : model_(&model), symmetries_(effective_symmetries(model.symmetry)) {
  require_vertices(model.metric_vertices);
  if (!model.symmetry.trivial()) index_.emplace(model.metric_vertices);
}

double MetricEvaluator::add_s(const RigidTransform& est, const RigidTransform& gt) const {
  if (!index_) return add_trivial(est, gt, model_->metric_vertices);
  return adi(est, gt, model_->metric_vertices, *index_);
}

MetricRecord MetricEvaluator::evaluate(const RigidTransform& est, const RigidTransform& gt,
                                       const CameraIntrinsics& k) const {
  MetricRecord rec;
  rec.rotation_error = rotation_error(est, gt, model_->symmetry);
  const auto te = translation_error(est, gt);
  rec.translation_error = te.total;
  rec.translation_error_along_view = te.along_view;
  rec.add_s = add_s(est, gt);
  rec.mssd = mssd(est, gt, symmetries_, model_->metric_vertices);
  try {
    rec.mspd = mspd(est, gt, symmetries_, model_->metric_vertices, k);
  } catch (const NonPositiveDepthError&) {
    rec.mspd = std::numeric_limits<double>::infinity();
    rec.mspd_behind_camera = true;
  }
  return rec;
}

MetricRecord evaluate_pair(const MatchedPair& pair, const ObjectModel& model, const CameraIntrinsics& k) {
  return MetricEvaluator(model).evaluate(pair.estimate.pose, pair.ground_truth.pose, k);
}

}  // namespace poseval
