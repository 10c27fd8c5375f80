#include "poseval/grasp_trial.hpp"

#include "poseval/error.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace poseval {

std::string_view to_string(FailureStage stage) {
  switch (stage) {
    case FailureStage::none: return "none";
    case FailureStage::pre_grasp_collision: return "pre_grasp_collision";
    case FailureStage::no_closure: return "no_closure";
    case FailureStage::slip_or_eject: return "slip_or_eject";
    case FailureStage::tolerance_exceeded: return "tolerance_exceeded";
    case FailureStage::missing_estimate: return "missing_estimate";
    case FailureStage::indeterminate: return "indeterminate";
  }
  return "unknown";
}

std::optional<FailureStage> parse_failure_stage(std::string_view name) {
  for (const auto s : {FailureStage::none, FailureStage::pre_grasp_collision, FailureStage::no_closure,
                       FailureStage::slip_or_eject, FailureStage::tolerance_exceeded, FailureStage::missing_estimate,
                       FailureStage::indeterminate}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

GripperModel GripperModel::parallel_default() { return {}; }

GripperModel GripperModel::underactuated_default() {
  GripperModel g;
  g.kind = GripperKind::underactuated;
  g.finger_depth = 90;
  g.friction_with_object = 0.6;
  return g;
}

void GripperModel::validate() const {
  const std::string ctx = std::string(to_string(kind)) + " gripper: ";
  const auto positive = [&](double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, ctx + name + " must be positive");
  };
  positive(finger_depth, "finger_depth");
  positive(friction_with_object, "friction_with_object");
  if (kind == GripperKind::parallel) {
    positive(stroke, "stroke");
    positive(finger_length, "finger_length");
    positive(pad_width, "pad_width");
    positive(finger_thickness, "finger_thickness");
    positive(palm_half_width, "palm_half_width");
    positive(palm_half_height, "palm_half_height");
    positive(palm_thickness, "palm_thickness");
    positive(contact_band, "contact_band");
    positive(grip_force_n, "grip_force_n");
    if (finger_depth > finger_length) throw Error(ErrorKind::InvalidArgument, ctx + "finger_depth exceeds finger_length");
  } else {
    positive(finger_span, "finger_span");
    positive(rotation_tolerance, "rotation_tolerance");
  }
}

std::map<GripperKind, GripperModel> load_gripper_config(const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ParseError, path.string() + ": expected an object keyed by gripper");
  std::map<GripperKind, GripperModel> out;
  for (const auto& [name, entry] : j.items()) {
    if (name.starts_with("_")) continue;
    const auto kind = parse_gripper_kind(name);
    if (!kind) throw Error(ErrorKind::ConfigError, path.string() + ": unknown gripper '" + name + "'");
    if (!entry.is_object()) throw Error(ErrorKind::ParseError, path.string() + " '" + name + "': expected an object");
    GripperModel g = *kind == GripperKind::parallel ? GripperModel::parallel_default()
                                                    : GripperModel::underactuated_default();
    const std::map<std::string, double*> fields{
        {"stroke", &g.stroke},
        {"finger_length", &g.finger_length},
        {"finger_depth", &g.finger_depth},
        {"pad_width", &g.pad_width},
        {"finger_thickness", &g.finger_thickness},
        {"palm_half_width", &g.palm_half_width},
        {"palm_half_height", &g.palm_half_height},
        {"palm_thickness", &g.palm_thickness},
        {"contact_band", &g.contact_band},
        {"grip_force_n", &g.grip_force_n},
        {"finger_span", &g.finger_span},
        {"rotation_tolerance", &g.rotation_tolerance},
        {"friction_with_object", &g.friction_with_object},
    };
    for (const auto& [key, value] : entry.items()) {
      if (key.starts_with("_")) continue;
      const auto it = fields.find(key);
      if (it == fields.end()) {
        throw Error(ErrorKind::ConfigError, path.string() + " '" + name + "': unknown field '" + key + "'");
      }
      if (!value.is_number()) {
        throw Error(ErrorKind::ParseError, path.string() + " '" + name + "." + key + "': expected a number");
      }
      *it->second = value.get<double>();
    }
    try {
      g.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    out[*kind] = g;
  }
  return out;
}

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kGravity = 9.81;

struct Box {
  Vec3 lo;
  Vec3 hi;

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }

  // Does the segment p - s * d, s in [0, 1], meet the box?
  bool swept_hit(const Vec3& p, const Vec3& d) const {
    double s0 = 0, s1 = 1;
    for (int i = 0; i < 3; ++i) {
      const double dir = -d[i];
      if (std::abs(dir) < 1e-15) {
        if (p[i] < lo[i] || p[i] > hi[i]) return false;
        continue;
      }
      double a = (lo[i] - p[i]) / dir;
      double b = (hi[i] - p[i]) / dir;
      if (a > b) std::swap(a, b);
      s0 = std::max(s0, a);
      s1 = std::min(s1, b);
      if (s0 > s1) return false;
    }
    return true;
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    return out;
  }
};

struct ParallelGeometry {
  Box left_finger;
  Box right_finger;
  Box palm;
  Box closing;
};

ParallelGeometry parallel_geometry(const GripperModel& g) {
  const double half_open = g.stroke / 2;
  const double half_pad = g.pad_width / 2;
  ParallelGeometry geo;
  geo.left_finger = {Vec3(-half_open - g.finger_thickness, -half_pad, 0), Vec3(-half_open, half_pad, g.finger_length)};
  geo.right_finger = {Vec3(half_open, -half_pad, 0), Vec3(half_open + g.finger_thickness, half_pad, g.finger_length)};
  geo.palm = {Vec3(-g.palm_half_width, -g.palm_half_height, -g.palm_thickness),
              Vec3(g.palm_half_width, g.palm_half_height, 0)};
  geo.closing = {Vec3(-half_open, -half_pad, g.finger_length - g.finger_depth),
                 Vec3(half_open, half_pad, g.finger_length)};
  return geo;
}

void require_solid(const ObjectModel& model) {
  const auto& v = model.metric_vertices.empty() ? model.vertices : model.metric_vertices;
  if (v.size() < 4) {
    throw Error(ErrorKind::DegenerateMesh,
                "object " + std::to_string(model.object_id) + " has fewer than 4 vertices");
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : v) mean += p;
  mean /= static_cast<double>(v.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : v) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(v.size());
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const auto ev = es.eigenvalues();
  if (!(ev(2) > 0) || ev(0) <= 1e-12 * ev(2)) {
    throw Error(ErrorKind::DegenerateMesh,
                "object " + std::to_string(model.object_id) + " has no 4 non-coplanar vertices");
  }
}

Vec3 vertex_centroid(const std::vector<Vec3>& v) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : v) c += p;
  return c / static_cast<double>(v.size());
}

const std::vector<Vec3>& trial_vertices(const ObjectModel& m) {
  return m.metric_vertices.empty() ? m.vertices : m.metric_vertices;
}

struct ContactPatch {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();  // unsigned, x component >= 0
};

ContactPatch fit_patch(const std::vector<Vec3>& pts) {
  ContactPatch patch;
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  patch.centroid = c;
  if (pts.size() < 6) return patch;
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  cov /= static_cast<double>(pts.size());
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const auto ev = es.eigenvalues();
  // A patch spread over a surface region yields a stable plane; a line or
  // point contact falls back to the pad normal.
  if (ev(1) >= 1.0 && ev(0) <= 0.05 * ev(1)) {
    Vec3 n = es.eigenvectors().col(0).normalized();
    if (n.x() < 0) n = -n;
    patch.normal = n;
  }
  return patch;
}

double unsigned_angle(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0)) * kRadToDeg;
}

struct ClosureState {
  std::vector<Vec3> region;  // hand-frame vertices between the pads
  double x_min = 0;
  double x_max = 0;
  ContactPatch left;
  ContactPatch right;
};

std::optional<ClosureState> closure(const std::vector<Vec3>& verts_hand, const ParallelGeometry& geo,
                                    const GripperModel& g) {
  ClosureState s;
  for (const auto& p : verts_hand) {
    if (geo.closing.contains(p)) s.region.push_back(p);
  }
  if (s.region.empty()) return std::nullopt;
  s.x_min = HUGE_VAL;
  s.x_max = -HUGE_VAL;
  for (const auto& p : s.region) {
    s.x_min = std::min(s.x_min, p.x());
    s.x_max = std::max(s.x_max, p.x());
  }
  std::vector<Vec3> left, right;
  for (const auto& p : s.region) {
    if (p.x() <= s.x_min + g.contact_band) left.push_back(p);
    if (p.x() >= s.x_max - g.contact_band) right.push_back(p);
  }
  s.left = fit_patch(left);
  s.right = fit_patch(right);
  return s;
}

std::vector<Vec3> to_hand(const RigidTransform& hand_from_object, const std::vector<Vec3>& v) {
  std::vector<Vec3> out;
  out.reserve(v.size());
  for (const auto& p : v) out.push_back(hand_from_object.apply(p));
  return out;
}

TrialOutcome fail(FailureStage stage, std::string detail) {
  return {false, stage, std::numeric_limits<double>::quiet_NaN(), std::move(detail)};
}

TrialOutcome parallel_outcome(const TrialSpec& spec, const GripperModel& g, const SuccessCriterion& crit) {
  const ObjectModel& obj = *spec.object;
  const auto& verts = trial_vertices(obj);
  const ParallelGeometry geo = parallel_geometry(g);
  const RigidTransform hand_from_object = inverse(spec.plan) * spec.object_pose_sim;
  const auto vh = to_hand(hand_from_object, verts);

  // Stage 0/I: the open hand must clear the table and sweep in from the
  // standoff without passing through the object.
  for (const Box* box : {&geo.left_finger, &geo.right_finger, &geo.palm}) {
    for (const auto& c : box->corners()) {
      const double z = spec.plan.apply(c).z();
      if (z < -1e-6) return fail(FailureStage::pre_grasp_collision, "gripper below support plane (z " + format_fixed(z, 3) + " mm)");
    }
  }
  const Vec3& sweep = spec.ref.approach_offset;
  for (std::size_t i = 0; i < vh.size(); ++i) {
    const Vec3& p = vh[i];
    if (geo.left_finger.swept_hit(p, sweep) || geo.right_finger.swept_hit(p, sweep) || geo.palm.swept_hit(p, sweep)) {
      return fail(FailureStage::pre_grasp_collision, "approach sweep hits vertex " + std::to_string(i));
    }
  }
  for (const Box* finger : {&geo.left_finger, &geo.right_finger}) {
    bool inside_side = false, outside_side = false;
    for (const auto& p : vh) {
      if (p.y() < finger->lo.y() || p.y() > finger->hi.y() || p.z() < finger->lo.z() || p.z() > finger->hi.z()) continue;
      if (p.x() < finger->lo.x()) inside_side = true;
      if (p.x() > finger->hi.x()) outside_side = true;
    }
    if (inside_side && outside_side) return fail(FailureStage::pre_grasp_collision, "finger lands inside the object");
  }

  // Stage II: something must lie between the pads.
  const auto state = closure(vh, geo, g);
  if (!state) return fail(FailureStage::no_closure, "no object material between the finger pads");

  const double mu = std::min(g.friction_with_object, obj.friction_coefficient);
  const double cone = std::atan(mu) * kRadToDeg;
  const double left_tilt = unsigned_angle(state->left.normal, Vec3::UnitX());
  const double right_tilt = unsigned_angle(state->right.normal, Vec3::UnitX());
  if (left_tilt > cone || right_tilt > cone) {
    return fail(FailureStage::slip_or_eject, "contact normal outside friction cone (" + format_fixed(std::max(left_tilt, right_tilt), 2) +
                                                 " > " + format_fixed(cone, 2) + " deg)");
  }
  const Vec3 line = state->right.centroid - state->left.centroid;
  if (line.norm() > 1e-9) {
    const double a = std::max(unsigned_angle(line, state->left.normal), unsigned_angle(line, state->right.normal));
    if (a > cone) {
      return fail(FailureStage::slip_or_eject,
                  "contact line outside friction cone (" + format_fixed(a, 2) + " > " + format_fixed(cone, 2) + " deg)");
    }
  }
  const double deviation = hand_object_deviation(spec);
  if (deviation > cone) {
    return fail(FailureStage::slip_or_eject, "hand-object misalignment " + format_fixed(deviation, 2) + " deg exceeds friction cone " +
                                                 format_fixed(cone, 2) + " deg");
  }
  if (2 * mu * g.grip_force_n < obj.mass_kg * kGravity) {
    return fail(FailureStage::slip_or_eject, "grip friction cannot hold the object weight");
  }

  // Contact location relative to the object, compared with the reference grasp.
  const RigidTransform ref_hand_from_object = inverse(spec.ref.hand_pose_ref) * spec.object_pose_sim;
  const auto ref_state = closure(to_hand(ref_hand_from_object, verts), geo, g);
  const Vec3 mid = 0.5 * (state->left.centroid + state->right.centroid);
  if (ref_state) {
    const Vec3 ref_mid = 0.5 * (ref_state->left.centroid + ref_state->right.centroid);
    const double shift = (inverse(hand_from_object).apply(mid) - inverse(ref_hand_from_object).apply(ref_mid)).norm();
    if (shift > g.finger_depth) {
      return fail(FailureStage::tolerance_exceeded,
                  "contact point moved " + format_fixed(shift, 2) + " mm on the object (limit " + format_fixed(g.finger_depth, 2) + ")");
    }
  }

  // Stage III: closing centres the object between the pads.
  Vec3 centroid = hand_from_object.apply(vertex_centroid(verts));
  centroid.x() -= 0.5 * (state->x_min + state->x_max);
  TrialOutcome out;
  out.final_distance_mm = centroid.norm();
  const double error = std::abs(out.final_distance_mm - spec.ref.target_hand_object_distance);
  if (error > crit.tolerance_mm) {
    out.stage = FailureStage::tolerance_exceeded;
    out.detail = "hand-object distance off by " + format_fixed(error, 2) + " mm";
    return out;
  }
  out.success = true;
  return out;
}

TrialOutcome underactuated_outcome(const TrialSpec& spec, const GripperModel& g, const SuccessCriterion& crit) {
  const ObjectModel& obj = *spec.object;
  const RigidTransform hand_from_object = inverse(spec.plan) * spec.object_pose_sim;
  const Vec3 c = hand_from_object.apply(vertex_centroid(trial_vertices(obj)));
  const double radial = std::hypot(c.x(), c.y());
  if (radial > g.finger_span / 2 || c.z() < 0 || c.z() > g.finger_depth) {
    return fail(FailureStage::no_closure, "object centroid outside the caging volume");
  }
  const double deviation = hand_object_deviation(spec);
  if (deviation > g.rotation_tolerance) {
    return fail(FailureStage::slip_or_eject, "hand-object misalignment " + format_fixed(deviation, 2) +
                                                 " deg exceeds compliance " + format_fixed(g.rotation_tolerance, 2) + " deg");
  }
  TrialOutcome out;
  out.final_distance_mm = c.norm();
  const double error = std::abs(out.final_distance_mm - spec.ref.target_hand_object_distance);
  if (error > crit.tolerance_mm) {
    out.stage = FailureStage::tolerance_exceeded;
    out.detail = "hand-object distance off by " + format_fixed(error, 2) + " mm";
    return out;
  }
  out.success = true;
  return out;
}

}  // namespace

double hand_object_deviation(const TrialSpec& spec) {
  const RigidTransform plan_rel = inverse(spec.plan) * spec.object_pose_sim;
  const RigidTransform ref_rel = inverse(spec.ref.hand_pose_ref) * spec.object_pose_sim;
  return rotation_error(plan_rel, ref_rel, spec.object->symmetry);
}

TrialOutcome surrogate_outcome(const TrialSpec& spec, const GripperModel& gripper, const SuccessCriterion& criterion) {
  if (!spec.object) throw Error(ErrorKind::InvalidArgument, "trial has no object model");
  if (gripper.kind != spec.ref.gripper) {
    throw Error(ErrorKind::InvalidArgument, "reference grasp is for the " + std::string(to_string(spec.ref.gripper)) +
                                                " gripper, trial uses " + std::string(to_string(gripper.kind)));
  }
  require_solid(*spec.object);
  return gripper.kind == GripperKind::parallel ? parallel_outcome(spec, gripper, criterion)
                                               : underactuated_outcome(spec, gripper, criterion);
}

TrialOutcome SurrogateOutcomeModel::evaluate(const std::string&, const TrialSpec& spec, const GripperModel& gripper,
                                             const SuccessCriterion& criterion) {
  return surrogate_outcome(spec, gripper, criterion);
}

std::string TrialKey::id() const {
  return estimator + "/" + std::to_string(scene_id) + "/" + std::to_string(image_id) + "/" +
         std::to_string(object_id) + "/" + std::to_string(instance) + "/" + std::string(to_string(gripper)) + "/" +
         std::to_string(grasp_index);
}

TrialRecord run_trial(const TrialSpec& spec, const GripperModel& gripper, OutcomeModel& model, const TrialKey& key,
                      const MetricRecord& metrics, const SuccessCriterion& criterion) {
  TrialRecord rec;
  rec.key = key;
  rec.metrics = metrics;
  try {
    const TrialOutcome out = model.evaluate(key.id(), spec, gripper, criterion);
    rec.success = out.success;
    rec.failure_stage = out.success ? FailureStage::none : out.stage;
    rec.final_distance_mm = out.final_distance_mm;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OutcomeModelUnavailable) throw;
    rec.success = false;
    rec.failure_stage = FailureStage::indeterminate;
    rec.final_distance_mm = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

TrialRecord missing_estimate_record(const TrialKey& key) {
  TrialRecord rec;
  rec.key = key;
  rec.success = false;
  rec.failure_stage = FailureStage::missing_estimate;
  rec.final_distance_mm = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

}  // namespace poseval
