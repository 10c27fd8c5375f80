#pragma once

#include "poseval/bop_io.hpp"
#include "poseval/deviation.hpp"
#include "poseval/metrics.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>

namespace poseval {

enum class FailureStage {
  none,
  pre_grasp_collision,
  no_closure,
  slip_or_eject,
  tolerance_exceeded,
  missing_estimate,
  indeterminate,  // the outcome model could not be reached
};

std::string_view to_string(FailureStage stage);
std::optional<FailureStage> parse_failure_stage(std::string_view name);

// Hand frame: z is the approach axis with the palm face at z = 0 and the
// fingers reaching to z = finger_length; x is the closing direction and y
// runs across the finger pads.
struct GripperModel {
  GripperKind kind = GripperKind::parallel;

  // Parallel jaw.
  double stroke = 80;            // maximum opening between the pads
  double finger_length = 54;     // palm face to fingertip
  double finger_depth = 20;      // pad length measured back from the fingertip
  double pad_width = 20;
  double finger_thickness = 8;
  double palm_half_width = 100;  // along x
  double palm_half_height = 30;  // along y
  double palm_thickness = 70;    // behind the palm face, along -z
  double contact_band = 2;       // vertices this close to the extreme form a contact patch
  double grip_force_n = 70;

  // Underactuated hand.
  double finger_span = 110;       // caging diameter
  double rotation_tolerance = 25; // degrees

  double friction_with_object = 0.4;

  static GripperModel parallel_default();
  static GripperModel underactuated_default();

  void validate() const;  // throws InvalidArgument
};

// JSON object keyed by gripper kind; missing fields take the defaults above.
std::map<GripperKind, GripperModel> load_gripper_config(const std::filesystem::path& path);

struct SuccessCriterion {
  double tolerance_mm = 50;
  double hold_s = 15;
};

struct TrialSpec {
  const ObjectModel* object = nullptr;
  RigidTransform object_pose_sim;
  RigidTransform plan;
  ReferenceGrasp ref;
};

struct TrialOutcome {
  bool success = false;
  FailureStage stage = FailureStage::none;
  double final_distance_mm = 0;  // NaN when the object was never grasped
  std::string detail;
};

// Quasi-static geometric stand-in for the physics simulation. Throws
// Error(DegenerateMesh) when the model has fewer than 4 non-coplanar vertices.
TrialOutcome surrogate_outcome(const TrialSpec& spec, const GripperModel& gripper,
                               const SuccessCriterion& criterion = {});

// Gripper-relative orientation deviation, symmetry aware, in degrees.
double hand_object_deviation(const TrialSpec& spec);

class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual TrialOutcome evaluate(const std::string& trial_id, const TrialSpec& spec, const GripperModel& gripper,
                                const SuccessCriterion& criterion) = 0;
};

class SurrogateOutcomeModel final : public OutcomeModel {
 public:
  TrialOutcome evaluate(const std::string& trial_id, const TrialSpec& spec, const GripperModel& gripper,
                        const SuccessCriterion& criterion) override;
};

struct TrialKey {
  std::string estimator;
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  int instance = 0;
  GripperKind gripper = GripperKind::parallel;
  int grasp_index = 0;

  std::string id() const;  // stable textual key, also used as the adapter trial_id
  auto tie() const { return std::tie(estimator, scene_id, image_id, object_id, instance, gripper, grasp_index); }
  bool operator<(const TrialKey& o) const { return tie() < o.tie(); }
  bool operator==(const TrialKey& o) const { return tie() == o.tie(); }
};

struct TrialRecord {
  TrialKey key;
  std::optional<MetricRecord> metrics;  // absent for missing estimates
  bool success = false;
  FailureStage failure_stage = FailureStage::none;
  double final_distance_mm = 0;

  bool indeterminate() const { return failure_stage == FailureStage::indeterminate; }
};

// Runs the trial; an unreachable outcome model marks the record
// indeterminate instead of failed.
TrialRecord run_trial(const TrialSpec& spec, const GripperModel& gripper, OutcomeModel& model, const TrialKey& key,
                      const MetricRecord& metrics, const SuccessCriterion& criterion = {});

TrialRecord missing_estimate_record(const TrialKey& key);

}  // namespace poseval
