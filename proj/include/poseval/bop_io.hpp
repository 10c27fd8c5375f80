#pragma once

#include "poseval/se3.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace poseval {

struct ContinuousSymmetry {
  Vec3 axis;    // unit norm
  Vec3 offset;  // point on the axis, mm, object frame
};

// Object symmetries as listed in BOP models_info.json. `discrete` always
// contains the identity (inserted by make()).
struct SymmetrySpec {
  std::vector<RigidTransform> discrete{RigidTransform::identity()};
  std::vector<ContinuousSymmetry> continuous_axes;

  // Validates axes (unit norm to 1e-9 after normalization of BOP input is
  // the caller's job) and prepends the identity when it is absent.
  static SymmetrySpec make(std::vector<RigidTransform> discrete,
                           std::vector<ContinuousSymmetry> continuous_axes);

  bool trivial() const { return discrete.size() == 1 && continuous_axes.empty(); }
};

struct PhysicalParams {
  double mass_kg = 0;
  double friction = 0;
};

// Maximum vertex count used for metric evaluation; larger meshes are
// subsampled with a fixed stride.
inline constexpr std::size_t kMetricVertexCap = 10000;

struct ObjectModel {
  int object_id = 0;
  std::vector<Vec3> vertices;         // full mesh, mm
  std::vector<Vec3> metric_vertices;  // stride-subsampled copy, <= kMetricVertexCap
  double diameter = 0;                // mm
  SymmetrySpec symmetry;
  double mass_kg = 0;
  double friction_coefficient = 0;
  std::string mesh_path;

  // Throws Error(InvalidArgument) when an invariant is violated.
  void validate() const;
};

struct GroundTruthRecord {
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  int instance = 0;  // position in the image's scene_gt list
  RigidTransform pose;
  double visibility = 0;
};

struct EstimateRecord {
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  double score = 0;
  RigidTransform pose;
  double inference_time = 0;
  std::size_t row = 0;  // 1-based line number in the source file
};

struct RejectedEstimate {
  std::size_t row = 0;
  double drift = 0;
  std::string reason;
};

struct EstimateFile {
  std::vector<EstimateRecord> records;
  std::vector<RejectedEstimate> rejected;
};

// Largest rotation drift repaired on load; beyond this a row is rejected.
inline constexpr double kMaxRepairableDrift = 1e-3;

std::vector<Vec3> subsample_vertices(const std::vector<Vec3>& vertices,
                                     std::size_t cap = kMetricVertexCap);

// Exact maximum pairwise distance for meshes up to `exact_limit` vertices,
// otherwise a lower bound from repeated farthest-point sweeps.
double max_pairwise_distance(const std::vector<Vec3>& vertices, std::size_t exact_limit = 4000);

// <scene>/scene_gt.json + <scene>/scene_gt_info.json. The scene id is the
// numeric directory name.
std::vector<GroundTruthRecord> load_scene_ground_truth(const std::filesystem::path& scene_dir);

// <scene>/scene_camera.json, keyed by image id.
std::map<int, CameraIntrinsics> load_scene_cameras(const std::filesystem::path& scene_dir);

// JSON map object_id -> {mass_kg, friction}; an optional "default" entry
// applies to objects not listed.
struct PhysicalSidecar {
  std::map<int, PhysicalParams> objects;
  std::optional<PhysicalParams> fallback;

  PhysicalParams lookup(int object_id) const;  // throws UnknownObject
};
PhysicalSidecar load_physical_sidecar(const std::filesystem::path& path);

// Parses models_info.json and obj_XXXXXX.ply files in `models_dir`.
// `only` restricts loading to the listed ids (empty = every entry).
std::map<int, ObjectModel> load_models(const std::filesystem::path& models_dir,
                                       const PhysicalSidecar& physical,
                                       const std::vector<int>& only = {});

// BOP result CSV: scene_id,im_id,obj_id,score,R,t,time.
EstimateFile parse_estimates(std::istream& in, const std::string& source);
EstimateFile load_estimates(const std::filesystem::path& path);
void write_estimates(std::ostream& out, const std::vector<EstimateRecord>& records);

struct MatchedPair {
  EstimateRecord estimate;
  GroundTruthRecord ground_truth;
};

enum class DuplicatePolicy {
  highest_score,  // ties resolved by file order
  strict,         // exact score ties raise DuplicateKey
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<GroundTruthRecord> unmatched_ground_truth;  // visible GT without estimate
  std::vector<GroundTruthRecord> excluded_ground_truth;   // below visibility threshold
  std::vector<EstimateRecord> spurious_estimates;         // no ground truth for the key
  std::vector<EstimateRecord> excluded_estimates;         // ground truth below visibility threshold
  std::vector<EstimateRecord> dropped_duplicates;         // lost the score tie-break
};

MatchResult match_records(const std::vector<EstimateRecord>& estimates,
                          const std::vector<GroundTruthRecord>& ground_truth, double visibility_min,
                          DuplicatePolicy policy = DuplicatePolicy::highest_score);

}  // namespace poseval
