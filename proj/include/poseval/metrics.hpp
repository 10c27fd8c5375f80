#pragma once

#include "poseval/bop_io.hpp"
#include "poseval/se3.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace poseval {

// Steps used to discretize each continuous symmetry axis.
inline constexpr int kContinuousSymmetrySteps = 36;

struct MetricRecord {
  double rotation_error = 0;               // degrees
  double translation_error = 0;            // mm
  double translation_error_along_view = 0; // mm
  double add_s = 0;                        // mm
  double mssd = 0;                         // mm
  double mspd = 0;                         // px, +inf when a vertex is behind the camera
  bool mspd_behind_camera = false;
};

struct TranslationError {
  double total = 0;
  double along_view = 0;
};

// Rotation about the line through `offset` along `axis`.
RigidTransform continuous_symmetry_step(const ContinuousSymmetry& c, double angle_deg);

// Discrete set, or for continuous axes the union over axes of
// {step(k) * S : k < steps, S in discrete}.
std::vector<RigidTransform> effective_symmetries(const SymmetrySpec& sym,
                                                 int steps = kContinuousSymmetrySteps);

double rotation_error(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym);
TranslationError translation_error(const RigidTransform& est, const RigidTransform& gt);

double mssd(const RigidTransform& est, const RigidTransform& gt, std::span<const RigidTransform> symmetries,
            std::span<const Vec3> vertices);
double mssd(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
            std::span<const Vec3> vertices);

// Throws NonPositiveDepthError naming the first vertex that lands at z <= 0
// under the estimate or any symmetric copy of the ground truth.
double mspd(const RigidTransform& est, const RigidTransform& gt, std::span<const RigidTransform> symmetries,
            std::span<const Vec3> vertices, const CameraIntrinsics& k);
double mspd(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
            std::span<const Vec3> vertices, const CameraIntrinsics& k);

// Exact nearest-neighbour search over a fixed point set (kd-tree).
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(std::span<const Vec3> points);

  double nearest_distance(const Vec3& query) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& q, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

// ADD for trivial symmetry, otherwise ADI.
double add_s(const RigidTransform& est, const RigidTransform& gt, const SymmetrySpec& sym,
             std::span<const Vec3> vertices);

// Caches the symmetry expansion and the ADI index for one model.
class MetricEvaluator {
 public:
  explicit MetricEvaluator(const ObjectModel& model);

  MetricRecord evaluate(const RigidTransform& est, const RigidTransform& gt, const CameraIntrinsics& k) const;
  double add_s(const RigidTransform& est, const RigidTransform& gt) const;

  const ObjectModel& model() const noexcept { return *model_; }
  std::span<const RigidTransform> symmetries() const noexcept { return symmetries_; }

 private:
  const ObjectModel* model_;
  std::vector<RigidTransform> symmetries_;
  std::optional<NearestNeighborIndex> index_;
};

MetricRecord evaluate_pair(const MatchedPair& pair, const ObjectModel& model, const CameraIntrinsics& k);

}  // namespace poseval
