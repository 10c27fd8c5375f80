#pragma once

#include "poseval/bop_io.hpp"
#include "poseval/deviation.hpp"
#include "poseval/grasp_trial.hpp"
#include "poseval/metrics.hpp"
#include "poseval/pipeline.hpp"
#include "poseval/ply.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"
#include "oracle/brute_force.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <optional>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testing_support {

namespace fs = std::filesystem;
using poseval::Mat3;
using poseval::RigidTransform;
using poseval::Vec3;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "poseval") {
    std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0, 1)(engine_); }

  Vec3 unit_vector() {
    Vec3 v(normal(), normal(), normal());
    while (v.norm() < 1e-6) v = Vec3(normal(), normal(), normal());
    return v.normalized();
  }
  Vec3 in_box(double half) { return Vec3(uniform(-half, half), uniform(-half, half), uniform(-half, half)); }
  Mat3 rotation() { return poseval::axis_angle(unit_vector(), uniform(0, 180)); }
  RigidTransform transform(double translation_half) { return {rotation(), in_box(translation_half)}; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline oracle::M4 to_m4(const RigidTransform& t) { return oracle::homogeneous(t.rotation(), t.translation()); }

inline std::vector<oracle::M4> to_m4(const std::vector<RigidTransform>& v) {
  std::vector<oracle::M4> out;
  for (const auto& t : v) out.push_back(to_m4(t));
  return out;
}

inline std::vector<oracle::Axis> to_axes(const std::vector<poseval::ContinuousSymmetry>& v) {
  std::vector<oracle::Axis> out;
  for (const auto& c : v) out.push_back({c.axis, c.offset});
  return out;
}

// Surface samples of an axis-aligned box centred on the origin.
inline std::vector<Vec3> box_surface(const Vec3& size, int per_edge) {
  std::vector<Vec3> out;
  for (int i = 0; i <= per_edge; ++i)
    for (int j = 0; j <= per_edge; ++j)
      for (int k = 0; k <= per_edge; ++k) {
        if (i != 0 && i != per_edge && j != 0 && j != per_edge && k != 0 && k != per_edge) continue;
        out.push_back(Vec3(size.x() * (double(i) / per_edge - 0.5), size.y() * (double(j) / per_edge - 0.5),
                           size.z() * (double(k) / per_edge - 0.5)));
      }
  return out;
}

inline poseval::ObjectModel make_model(int id, std::vector<Vec3> vertices, poseval::SymmetrySpec sym = {},
                                       double mass_kg = 0.2, double friction = 0.5) {
  poseval::ObjectModel m;
  m.object_id = id;
  m.vertices = std::move(vertices);
  m.metric_vertices = poseval::subsample_vertices(m.vertices);
  m.diameter = poseval::max_pairwise_distance(m.vertices);
  m.symmetry = std::move(sym);
  m.mass_kg = mass_kg;
  m.friction_coefficient = friction;
  m.mesh_path = "obj_" + std::to_string(id) + ".ply";
  return m;
}

inline Mat3 hand_rotation(const Vec3& approach, const Vec3& closing) {
  Mat3 r;
  r.col(2) = approach.normalized();
  r.col(0) = closing.normalized();
  r.col(1) = r.col(2).cross(r.col(0));
  return r;
}

// Top-down parallel grasp and caging grasp on a box resting at the sim
// origin; the fingertips reach `engage` mm below the top face. The target
// distance comes from a zero-deviation surrogate run.
inline poseval::ReferenceGrasp top_down_grasp(const poseval::ObjectModel& m, const RigidTransform& object_sim,
                                              const poseval::GripperModel& g, int index = 0,
                                              double engage = 12, double yaw_deg = 0) {
  double top = -HUGE_VAL;
  for (const auto& p : m.vertices) top = std::max(top, object_sim.apply(p).z());
  const double a = yaw_deg * std::numbers::pi / 180;
  const Mat3 r = hand_rotation(-Vec3::UnitZ(), Vec3(std::cos(a), std::sin(a), 0));
  Vec3 c = Vec3::Zero();
  for (const auto& p : m.vertices) c += object_sim.apply(p);
  c /= static_cast<double>(m.vertices.size());
  const double z = g.kind == poseval::GripperKind::parallel ? top - engage + g.finger_length : top + 10;
  poseval::ReferenceGrasp ref;
  ref.gripper = g.kind;
  ref.object_id = m.object_id;
  ref.grasp_index = index;
  ref.hand_pose_ref = RigidTransform::nearest(r, Vec3(c.x(), c.y(), z));
  ref.approach_offset = Vec3(0, 0, -100);
  ref.lift_height = 100;
  ref.target_hand_object_distance = 1;
  const poseval::TrialSpec spec{&m, object_sim, ref.hand_pose_ref, ref};
  ref.target_hand_object_distance = poseval::surrogate_outcome(spec, g).final_distance_mm;
  return ref;
}

inline std::string pose_csv_r(const RigidTransform& p) {
  std::string s;
  for (int i = 0; i < 9; ++i) s += (i ? " " : "") + poseval::format_double(p.rotation()(i / 3, i % 3));
  return s;
}

inline nlohmann::ordered_json rotation_json(const RigidTransform& p) {
  nlohmann::ordered_json r = nlohmann::ordered_json::array();
  for (int i = 0; i < 9; ++i) r.push_back(p.rotation()(i / 3, i % 3));
  return r;
}

inline nlohmann::ordered_json translation_json(const RigidTransform& p) {
  return {p.translation().x(), p.translation().y(), p.translation().z()};
}

struct FixtureImage {
  int image_id = 0;
  RigidTransform gt;
  double visibility = 1;
  std::optional<RigidTransform> estimate;  // absent = missing detection
};

struct FixtureDataset {
  fs::path root;
  fs::path config;
  fs::path output;
  poseval::ObjectModel model;
};

inline poseval::CameraIntrinsics fixture_camera() { return poseval::CameraIntrinsics::make(600, 600, 320, 240); }

// One box object (id 1), one scene (1), one estimator named "est", both
// grippers with a top-down reference grasp each.
inline FixtureDataset write_fixture_dataset(const fs::path& root, const std::vector<FixtureImage>& images,
                                            const std::string& extra_config = "") {
  using nlohmann::ordered_json;
  FixtureDataset ds;
  ds.root = root;
  fs::create_directories(root / "models");
  fs::create_directories(root / "test" / "000001");
  fs::create_directories(root / "results");

  const auto vertices = box_surface(Vec3(30, 40, 50), 5);
  {
    std::ofstream ply(root / "models" / "obj_000001.ply", std::ios::binary);
    poseval::write_ply_vertices(ply, vertices, poseval::PlyEncoding::ascii);
  }
  const double diameter = poseval::max_pairwise_distance(vertices);
  ordered_json info{{"1", {{"diameter", diameter}}}};
  poseval::write_file(root / "models" / "models_info.json", info.dump(2));
  poseval::write_file(root / "physical.json", R"({"1": {"mass_kg": 0.2, "friction": 0.5}})");
  poseval::write_file(root / "grippers.json", R"({"parallel": {}, "underactuated": {"finger_depth": 90, "friction_with_object": 0.6}})");

  poseval::PhysicalSidecar sidecar;
  sidecar.objects[1] = {0.2, 0.5};
  ds.model = poseval::load_models(root / "models", sidecar).at(1);

  const auto grippers = poseval::load_gripper_config(root / "grippers.json");
  poseval::GraspCatalog catalog;
  const RigidTransform sim = poseval::default_rest_pose(ds.model.vertices);
  catalog.set_rest_pose(1, sim);
  for (const auto& [kind, g] : grippers) catalog.add(top_down_grasp(ds.model, sim, g));
  poseval::write_file(root / "grasp_catalog.json", poseval::grasp_catalog_json(catalog));

  ordered_json gt = ordered_json::object(), gt_info = ordered_json::object(), cams = ordered_json::object();
  std::vector<poseval::EstimateRecord> estimates;
  const auto k = fixture_camera();
  for (const auto& im : images) {
    const std::string key = std::to_string(im.image_id);
    gt[key] = ordered_json::array({{{"cam_R_m2c", rotation_json(im.gt)}, {"cam_t_m2c", translation_json(im.gt)}, {"obj_id", 1}}});
    gt_info[key] = ordered_json::array({{{"visib_fract", im.visibility}}});
    cams[key] = {{"cam_K", {k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0}}, {"depth_scale", 1.0}};
    if (im.estimate) {
      poseval::EstimateRecord e;
      e.scene_id = 1;
      e.image_id = im.image_id;
      e.object_id = 1;
      e.score = 0.9;
      e.pose = *im.estimate;
      e.inference_time = 0.05;
      estimates.push_back(e);
    }
  }
  poseval::write_file(root / "test" / "000001" / "scene_gt.json", gt.dump(2));
  poseval::write_file(root / "test" / "000001" / "scene_gt_info.json", gt_info.dump(2));
  poseval::write_file(root / "test" / "000001" / "scene_camera.json", cams.dump(2));
  std::ostringstream csv;
  poseval::write_estimates(csv, estimates);
  poseval::write_file(root / "results" / "est_fixture-test.csv", csv.str());

  ds.output = root / "out";
  ds.config = root / "config.json";
  std::string cfg = R"({
  "dataset_root": ".",
  "result_files": [{"name": "est", "path": "results/est_fixture-test.csv"}],
  "gripper_config": "grippers.json",
  "grasp_catalog": "grasp_catalog.json",
  "physical_sidecar": "physical.json",
  "output_dir": "out",
  "threads": 2)";
  cfg += extra_config;
  cfg += "\n}\n";
  poseval::write_file(ds.config, cfg);
  return ds;
}

inline std::string slurp(const fs::path& p) { return poseval::read_file(p); }

// Every regular file under `dir` with its contents, keyed by relative path.
inline std::map<std::string, std::string> tree_contents(const fs::path& dir, bool skip_manifest) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel.starts_with(".cache")) continue;
    if (skip_manifest && rel == "manifest.json") continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

}  // namespace testing_support
