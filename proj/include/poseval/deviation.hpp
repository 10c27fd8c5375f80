#pragma once

#include "poseval/se3.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poseval {

enum class GripperKind { parallel, underactuated };

std::string_view to_string(GripperKind kind);
std::optional<GripperKind> parse_gripper_kind(std::string_view name);

// A handcrafted pre-grasp hand pose in the simulator world plus the policy
// parameters of the open-loop grasp.
struct ReferenceGrasp {
  GripperKind gripper = GripperKind::parallel;
  int object_id = 0;
  int grasp_index = 0;
  RigidTransform hand_pose_ref;  // hand frame in the simulator world, mm
  Vec3 approach_offset = Vec3::Zero();  // Stage-0 standoff, hand frame
  double lift_height = 0;
  double target_hand_object_distance = 0;

  void validate() const;  // throws InvalidArgument
};

// Delta = est * gt^-1, in the dataset (camera) frame.
RigidTransform deviation_in_world(const RigidTransform& est, const RigidTransform& gt);

// Conjugates into the ground-truth object frame, then into the simulator
// world through the object's simulated pose.
RigidTransform deviation_in_object(const RigidTransform& delta_world, const RigidTransform& gt_world);
RigidTransform deviation_to_sim(const RigidTransform& delta_world, const RigidTransform& gt_world,
                                const RigidTransform& object_pose_sim);

RigidTransform perturbed_plan(const RigidTransform& delta_sim, const ReferenceGrasp& ref);

// Every intermediate of the transfer, kept for reporting.
struct DeviationChain {
  RigidTransform delta_world;
  RigidTransform delta_object;
  RigidTransform delta_sim;
  RigidTransform plan;
};

DeviationChain transfer_deviation(const RigidTransform& est, const RigidTransform& gt,
                                  const RigidTransform& object_pose_sim, const ReferenceGrasp& ref);

// Identity rotation, translated so the mesh rests on z = 0 with its xy
// bounding-box centre at the origin.
RigidTransform default_rest_pose(std::span<const Vec3> vertices);

// Throws InvalidArgument when the posed mesh dips below z = 0 by more than 1e-6 mm.
void check_rests_on_support(const RigidTransform& object_pose_sim, std::span<const Vec3> vertices);

class GraspCatalog {
 public:
  void add(ReferenceGrasp grasp);  // throws DuplicateKey / InvalidArgument
  void set_rest_pose(int object_id, const RigidTransform& pose);

  const ReferenceGrasp* find(int object_id, GripperKind gripper, int grasp_index) const;
  std::vector<const ReferenceGrasp*> entries_for(int object_id, GripperKind gripper) const;
  const std::vector<ReferenceGrasp>& grasps() const noexcept { return grasps_; }
  std::optional<RigidTransform> rest_pose(int object_id) const;

  // Catalogued rest pose, or default_rest_pose of the mesh.
  RigidTransform object_pose_sim(int object_id, std::span<const Vec3> vertices) const;

 private:
  std::vector<ReferenceGrasp> grasps_;
  std::map<int, RigidTransform> rest_poses_;
};

GraspCatalog load_grasp_catalog(const std::filesystem::path& path);
std::string grasp_catalog_json(const GraspCatalog& catalog);

}  // namespace poseval
