#include "poseval/deviation.hpp"

#include "poseval/error.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace poseval {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(GripperKind kind) {
  switch (kind) {
    case GripperKind::parallel: return "parallel";
    case GripperKind::underactuated: return "underactuated";
  }
  return "unknown";
}

std::optional<GripperKind> parse_gripper_kind(std::string_view name) {
  if (name == "parallel") return GripperKind::parallel;
  if (name == "underactuated") return GripperKind::underactuated;
  return std::nullopt;
}

void ReferenceGrasp::validate() const {
  const std::string ctx = "reference grasp (object " + std::to_string(object_id) + ", " +
                          std::string(to_string(gripper)) + ", index " + std::to_string(grasp_index) + "): ";
  if (!(lift_height > 0)) throw Error(ErrorKind::InvalidArgument, ctx + "lift_height must be positive");
  if (!(target_hand_object_distance > 0)) {
    throw Error(ErrorKind::InvalidArgument, ctx + "target_hand_object_distance must be positive");
  }
  if (!approach_offset.allFinite()) throw Error(ErrorKind::InvalidArgument, ctx + "approach_offset not finite");
}

RigidTransform deviation_in_world(const RigidTransform& est, const RigidTransform& gt) {
  return est * inverse(gt);
}

RigidTransform deviation_in_object(const RigidTransform& delta_world, const RigidTransform& gt_world) {
  return inverse(gt_world) * delta_world * gt_world;
}

RigidTransform deviation_to_sim(const RigidTransform& delta_world, const RigidTransform& gt_world,
                                const RigidTransform& object_pose_sim) {
  return object_pose_sim * deviation_in_object(delta_world, gt_world) * inverse(object_pose_sim);
}

RigidTransform perturbed_plan(const RigidTransform& delta_sim, const ReferenceGrasp& ref) {
  return delta_sim * ref.hand_pose_ref;
}

DeviationChain transfer_deviation(const RigidTransform& est, const RigidTransform& gt,
                                  const RigidTransform& object_pose_sim, const ReferenceGrasp& ref) {
  DeviationChain chain;
  chain.delta_world = deviation_in_world(est, gt);
  // gt^-1 * (est * gt^-1) * gt reduces to gt^-1 * est; the short form avoids
  // amplifying the rounding of delta_world by the camera-to-object distance.
  chain.delta_object = inverse(gt) * est;
  chain.delta_sim = object_pose_sim * chain.delta_object * inverse(object_pose_sim);
  chain.plan = perturbed_plan(chain.delta_sim, ref);
  return chain;
}

RigidTransform default_rest_pose(std::span<const Vec3> vertices) {
  if (vertices.empty()) throw Error(ErrorKind::InvalidArgument, "rest pose needs vertices");
  Vec3 lo = vertices.front(), hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return RigidTransform::from_translation(Vec3(-(lo.x() + hi.x()) / 2, -(lo.y() + hi.y()) / 2, -lo.z()));
}

void check_rests_on_support(const RigidTransform& object_pose_sim, std::span<const Vec3> vertices) {
  double min_z = HUGE_VAL;
  for (const auto& v : vertices) min_z = std::min(min_z, object_pose_sim.apply(v).z());
  if (min_z < -1e-6) {
    throw Error(ErrorKind::InvalidArgument,
                "simulated object pose puts the mesh " + format_double(-min_z) + " mm below the support plane");
  }
}

void GraspCatalog::add(ReferenceGrasp grasp) {
  grasp.validate();
  if (find(grasp.object_id, grasp.gripper, grasp.grasp_index)) {
    throw Error(ErrorKind::DuplicateKey, "reference grasp (object " + std::to_string(grasp.object_id) + ", " +
                                             std::string(to_string(grasp.gripper)) + ", index " +
                                             std::to_string(grasp.grasp_index) + ") listed twice");
  }
  grasps_.push_back(std::move(grasp));
  std::stable_sort(grasps_.begin(), grasps_.end(), [](const ReferenceGrasp& a, const ReferenceGrasp& b) {
    return std::tuple(a.object_id, a.gripper, a.grasp_index) < std::tuple(b.object_id, b.gripper, b.grasp_index);
  });
}

void GraspCatalog::set_rest_pose(int object_id, const RigidTransform& pose) { rest_poses_[object_id] = pose; }

const ReferenceGrasp* GraspCatalog::find(int object_id, GripperKind gripper, int grasp_index) const {
  for (const auto& g : grasps_) {
    if (g.object_id == object_id && g.gripper == gripper && g.grasp_index == grasp_index) return &g;
  }
  return nullptr;
}

std::vector<const ReferenceGrasp*> GraspCatalog::entries_for(int object_id, GripperKind gripper) const {
  std::vector<const ReferenceGrasp*> out;
  for (const auto& g : grasps_) {
    if (g.object_id == object_id && g.gripper == gripper) out.push_back(&g);
  }
  return out;
}

std::optional<RigidTransform> GraspCatalog::rest_pose(int object_id) const {
  if (const auto it = rest_poses_.find(object_id); it != rest_poses_.end()) return it->second;
  return std::nullopt;
}

RigidTransform GraspCatalog::object_pose_sim(int object_id, std::span<const Vec3> vertices) const {
  if (const auto pose = rest_pose(object_id)) return *pose;
  return default_rest_pose(vertices);
}

namespace {

[[noreturn]] void catalog_fail(const std::string& ctx, const std::string& what) {
  throw Error(ErrorKind::ParseError, ctx + ": " + what);
}

std::vector<double> numbers(const json& j, std::size_t n, const std::string& ctx) {
  if (!j.is_array() || j.size() != n) catalog_fail(ctx, "expected " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) catalog_fail(ctx, "non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

double number(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key) || !obj[key].is_number()) catalog_fail(ctx, std::string("missing numeric '") + key + "'");
  return obj[key].get<double>();
}

RigidTransform pose_from_json(const json& j, const std::string& ctx) {
  if (!j.is_object() || !j.contains("R") || !j.contains("t")) catalog_fail(ctx, "pose needs R and t");
  const auto r = numbers(j["R"], 9, ctx + ".R");
  const auto t = numbers(j["t"], 3, ctx + ".t");
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  const double drift = orthonormality_drift(m);
  if (!(drift <= 1e-6)) catalog_fail(ctx, "R is not a rotation (drift " + format_double(drift) + ")");
  const Vec3 translation(t[0], t[1], t[2]);
  if (drift <= kRotationTolerance) return RigidTransform(m, translation);
  return RigidTransform::nearest(m, translation);
}

ordered_json pose_to_json(const RigidTransform& p) {
  ordered_json r = ordered_json::array(), t = ordered_json::array();
  for (int i = 0; i < 9; ++i) r.push_back(p.rotation()(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) t.push_back(p.translation()[i]);
  return ordered_json{{"R", r}, {"t", t}};
}

}  // namespace

GraspCatalog load_grasp_catalog(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    catalog_fail(path.string(), std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("grasps") || !j["grasps"].is_array()) {
    catalog_fail(path.string(), "expected an object with a 'grasps' list");
  }
  GraspCatalog catalog;
  if (j.contains("objects")) {
    if (!j["objects"].is_array()) catalog_fail(path.string(), "'objects' must be a list");
    for (std::size_t i = 0; i < j["objects"].size(); ++i) {
      const auto& o = j["objects"][i];
      const std::string ctx = path.string() + " objects[" + std::to_string(i) + "]";
      if (!o.is_object() || !o.contains("object_id") || !o["object_id"].is_number_integer()) {
        catalog_fail(ctx, "missing integer object_id");
      }
      if (o.contains("rest_pose")) catalog.set_rest_pose(o["object_id"].get<int>(), pose_from_json(o["rest_pose"], ctx + ".rest_pose"));
    }
  }
  for (std::size_t i = 0; i < j["grasps"].size(); ++i) {
    const auto& g = j["grasps"][i];
    const std::string ctx = path.string() + " grasps[" + std::to_string(i) + "]";
    if (!g.is_object()) catalog_fail(ctx, "entry must be an object");
    ReferenceGrasp ref;
    if (!g.contains("object_id") || !g["object_id"].is_number_integer()) catalog_fail(ctx, "missing integer object_id");
    if (!g.contains("grasp_index") || !g["grasp_index"].is_number_integer()) {
      catalog_fail(ctx, "missing integer grasp_index");
    }
    if (!g.contains("gripper") || !g["gripper"].is_string()) catalog_fail(ctx, "missing gripper name");
    const auto kind = parse_gripper_kind(g["gripper"].get<std::string>());
    if (!kind) catalog_fail(ctx, "unknown gripper '" + g["gripper"].get<std::string>() + "'");
    ref.gripper = *kind;
    ref.object_id = g["object_id"].get<int>();
    ref.grasp_index = g["grasp_index"].get<int>();
    if (!g.contains("hand_pose_ref")) catalog_fail(ctx, "missing hand_pose_ref");
    ref.hand_pose_ref = pose_from_json(g["hand_pose_ref"], ctx + ".hand_pose_ref");
    if (!g.contains("approach_offset")) catalog_fail(ctx, "missing approach_offset");
    const auto off = numbers(g["approach_offset"], 3, ctx + ".approach_offset");
    ref.approach_offset = Vec3(off[0], off[1], off[2]);
    ref.lift_height = number(g, "lift_height", ctx);
    ref.target_hand_object_distance = number(g, "target_hand_object_distance", ctx);
    try {
      catalog.add(ref);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DuplicateKey) throw;
      catalog_fail(ctx, e.what());
    }
  }
  return catalog;
}

std::string grasp_catalog_json(const GraspCatalog& catalog) {
  ordered_json out;
  out["objects"] = ordered_json::array();
  std::vector<int> ids;
  for (const auto& g : catalog.grasps()) ids.push_back(g.object_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (const int id : ids) {
    ordered_json o{{"object_id", id}};
    if (const auto pose = catalog.rest_pose(id)) o["rest_pose"] = pose_to_json(*pose);
    out["objects"].push_back(o);
  }
  out["grasps"] = ordered_json::array();
  for (const auto& g : catalog.grasps()) {
    out["grasps"].push_back(ordered_json{
        {"object_id", g.object_id},
        {"gripper", std::string(to_string(g.gripper))},
        {"grasp_index", g.grasp_index},
        {"hand_pose_ref", pose_to_json(g.hand_pose_ref)},
        {"approach_offset", {g.approach_offset.x(), g.approach_offset.y(), g.approach_offset.z()}},
        {"lift_height", g.lift_height},
        {"target_hand_object_distance", g.target_hand_object_distance},
    });
  }
  return out.dump(2) + "\n";
}

}  // namespace poseval
