#include "poseval/bop_io.hpp"

#include "poseval/error.hpp"
#include "poseval/log.hpp"
#include "poseval/ply.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <set>
#include <tuple>

namespace poseval {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& context, const std::string& what) {
  throw Error(ErrorKind::ParseError, context + ": " + what);
}

json load_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

std::vector<double> number_array(const json& j, std::size_t arity, const std::string& context) {
  if (!j.is_array()) parse_fail(context, "expected an array");
  if (j.size() != arity) {
    parse_fail(context, "expected " + std::to_string(arity) + " values, got " + std::to_string(j.size()));
  }
  std::vector<double> out;
  out.reserve(arity);
  for (const auto& v : j) {
    if (!v.is_number()) parse_fail(context, "non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

Mat3 row_major_3x3(const std::vector<double>& v) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r(i, k) = v[static_cast<std::size_t>(3 * i + k)];
  return r;
}

// Accepts rotations that are already valid, repairs small drift, and
// returns std::nullopt when the drift is beyond repair.
std::optional<RigidTransform> checked_pose(const Mat3& r, const Vec3& t, double* drift_out) {
  if (!r.allFinite() || !t.allFinite()) {
    if (drift_out) *drift_out = HUGE_VAL;
    return std::nullopt;
  }
  const double drift = orthonormality_drift(r);
  if (drift_out) *drift_out = drift;
  if (drift <= kRotationTolerance) return RigidTransform(r, t);
  if (drift <= kMaxRepairableDrift) return RigidTransform::nearest(r, t);
  return std::nullopt;
}

int scene_id_from_dir(const std::filesystem::path& scene_dir) {
  auto name = scene_dir.filename().string();
  if (name.empty()) name = scene_dir.parent_path().filename().string();
  const auto id = parse_int(name);
  if (!id) parse_fail(scene_dir.string(), "scene directory name is not a numeric scene id");
  return static_cast<int>(*id);
}

int json_key_int(const std::string& key, const std::string& context) {
  const auto id = parse_int(key);
  if (!id) parse_fail(context, "non-numeric key '" + key + "'");
  return static_cast<int>(*id);
}

std::string mesh_file_name(int object_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "obj_%06d.ply", object_id);
  return buf;
}

}  // namespace

SymmetrySpec SymmetrySpec::make(std::vector<RigidTransform> discrete,
                                std::vector<ContinuousSymmetry> continuous_axes) {
  SymmetrySpec spec;
  spec.discrete.clear();
  const auto is_identity = [](const RigidTransform& t) {
    return (t.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9 &&
           t.translation().cwiseAbs().maxCoeff() <= 1e-9;
  };
  const bool has_identity = std::any_of(discrete.begin(), discrete.end(), is_identity);
  if (!has_identity) spec.discrete.push_back(RigidTransform::identity());
  for (auto& t : discrete) spec.discrete.push_back(t);
  for (const auto& c : continuous_axes) {
    if (std::abs(c.axis.norm() - 1.0) > 1e-9) {
      throw Error(ErrorKind::InvalidArgument, "continuous symmetry axis is not unit norm");
    }
  }
  spec.continuous_axes = std::move(continuous_axes);
  return spec;
}

void ObjectModel::validate() const {
  const std::string ctx = "object " + std::to_string(object_id) + ": ";
  if (vertices.empty()) throw Error(ErrorKind::InvalidArgument, ctx + "no vertices");
  if (metric_vertices.empty()) throw Error(ErrorKind::InvalidArgument, ctx + "no metric vertices");
  if (!(diameter > 0)) throw Error(ErrorKind::InvalidArgument, ctx + "diameter must be positive");
  if (!(mass_kg > 0)) throw Error(ErrorKind::InvalidArgument, ctx + "mass must be positive");
  if (!(friction_coefficient > 0)) throw Error(ErrorKind::InvalidArgument, ctx + "friction must be positive");
}

std::vector<Vec3> subsample_vertices(const std::vector<Vec3>& vertices, std::size_t cap) {
  if (cap == 0 || vertices.size() <= cap) return vertices;
  const std::size_t stride = (vertices.size() + cap - 1) / cap;
  std::vector<Vec3> out;
  out.reserve(vertices.size() / stride + 1);
  for (std::size_t i = 0; i < vertices.size(); i += stride) out.push_back(vertices[i]);
  return out;
}

double max_pairwise_distance(const std::vector<Vec3>& vertices, std::size_t exact_limit) {
  if (vertices.size() < 2) return 0;
  double best = 0;
  if (vertices.size() <= exact_limit) {
    for (std::size_t i = 0; i < vertices.size(); ++i)
      for (std::size_t k = i + 1; k < vertices.size(); ++k)
        best = std::max(best, (vertices[i] - vertices[k]).squaredNorm());
    return std::sqrt(best);
  }
  std::size_t anchor = 0;
  for (int sweep = 0; sweep < 8; ++sweep) {
    std::size_t far = anchor;
    double far_d = -1;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const double d = (vertices[i] - vertices[anchor]).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    best = std::max(best, far_d);
    if (far == anchor) break;
    anchor = far;
  }
  return std::sqrt(best);
}

std::vector<GroundTruthRecord> load_scene_ground_truth(const std::filesystem::path& scene_dir) {
  const int scene_id = scene_id_from_dir(scene_dir);
  const auto gt_path = scene_dir / "scene_gt.json";
  const auto info_path = scene_dir / "scene_gt_info.json";
  const json gt = load_json(gt_path);
  const json info = load_json(info_path);
  if (!gt.is_object()) parse_fail(gt_path.string(), "top level must be an object keyed by image id");
  if (!info.is_object()) parse_fail(info_path.string(), "top level must be an object keyed by image id");

  std::vector<GroundTruthRecord> records;
  for (const auto& [key, annotations] : gt.items()) {
    const std::string ctx = gt_path.string() + " image '" + key + "'";
    const int image_id = json_key_int(key, gt_path.string());
    if (!annotations.is_array()) parse_fail(ctx, "expected a list of annotations");
    const auto info_it = info.find(key);
    if (info_it == info.end() || !info_it->is_array()) {
      throw Error(ErrorKind::MissingVisibility, info_path.string() + ": no entry for image '" + key + "'");
    }
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      const std::string ictx = ctx + " instance " + std::to_string(i);
      const auto& a = annotations[i];
      if (!a.is_object()) parse_fail(ictx, "annotation must be an object");
      if (!a.contains("cam_R_m2c") || !a.contains("cam_t_m2c") || !a.contains("obj_id")) {
        parse_fail(ictx, "missing cam_R_m2c / cam_t_m2c / obj_id");
      }
      const auto r = number_array(a["cam_R_m2c"], 9, ictx + " cam_R_m2c");
      const auto t = number_array(a["cam_t_m2c"], 3, ictx + " cam_t_m2c");
      if (!a["obj_id"].is_number_integer()) parse_fail(ictx, "obj_id must be an integer");
      if (i >= info_it->size() || !(*info_it)[i].is_object() || !(*info_it)[i].contains("visib_fract")) {
        throw Error(ErrorKind::MissingVisibility,
                    info_path.string() + ": image '" + key + "' lacks visib_fract for instance " + std::to_string(i));
      }
      const auto& vis = (*info_it)[i]["visib_fract"];
      if (!vis.is_number()) parse_fail(info_path.string() + " image '" + key + "'", "visib_fract must be numeric");
      const double visibility = vis.get<double>();
      if (!(visibility >= 0.0 && visibility <= 1.0)) {
        parse_fail(info_path.string() + " image '" + key + "'", "visib_fract outside [0, 1]");
      }
      const auto pose = checked_pose(row_major_3x3(r), Vec3(t[0], t[1], t[2]), nullptr);
      if (!pose) parse_fail(ictx, "cam_R_m2c is not a rotation");
      GroundTruthRecord rec;
      rec.scene_id = scene_id;
      rec.image_id = image_id;
      rec.object_id = a["obj_id"].get<int>();
      rec.instance = static_cast<int>(i);
      rec.pose = *pose;
      rec.visibility = visibility;
      records.push_back(rec);
    }
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.image_id, a.instance) < std::tie(b.image_id, b.instance);
  });
  return records;
}

std::map<int, CameraIntrinsics> load_scene_cameras(const std::filesystem::path& scene_dir) {
  const auto path = scene_dir / "scene_camera.json";
  const json cams = load_json(path);
  if (!cams.is_object()) parse_fail(path.string(), "top level must be an object keyed by image id");
  std::map<int, CameraIntrinsics> out;
  for (const auto& [key, entry] : cams.items()) {
    const std::string ctx = path.string() + " image '" + key + "'";
    const int image_id = json_key_int(key, path.string());
    if (!entry.is_object() || !entry.contains("cam_K")) parse_fail(ctx, "missing cam_K");
    const auto k = number_array(entry["cam_K"], 9, ctx + " cam_K");
    try {
      out.emplace(image_id, CameraIntrinsics::make(k[0], k[4], k[2], k[5]));
    } catch (const Error& e) {
      parse_fail(ctx, e.what());
    }
  }
  return out;
}

PhysicalParams PhysicalSidecar::lookup(int object_id) const {
  if (const auto it = objects.find(object_id); it != objects.end()) return it->second;
  if (fallback) return *fallback;
  throw Error(ErrorKind::UnknownObject,
              "no physical parameters for object " + std::to_string(object_id) + " and no default entry");
}

PhysicalSidecar load_physical_sidecar(const std::filesystem::path& path) {
  const json j = load_json(path);
  if (!j.is_object()) parse_fail(path.string(), "top level must be an object");
  const auto read = [&](const json& e, const std::string& ctx) {
    if (!e.is_object() || !e.contains("mass_kg") || !e.contains("friction") || !e["mass_kg"].is_number() ||
        !e["friction"].is_number()) {
      parse_fail(ctx, "expected {mass_kg, friction}");
    }
    PhysicalParams p{e["mass_kg"].get<double>(), e["friction"].get<double>()};
    if (!(p.mass_kg > 0) || !(p.friction > 0)) parse_fail(ctx, "mass_kg and friction must be positive");
    return p;
  };
  PhysicalSidecar sidecar;
  for (const auto& [key, entry] : j.items()) {
    const std::string ctx = path.string() + " key '" + key + "'";
    if (key == "default") {
      sidecar.fallback = read(entry, ctx);
    } else if (key.starts_with("_")) {
      continue;  // documentation fields
    } else {
      sidecar.objects[json_key_int(key, path.string())] = read(entry, ctx);
    }
  }
  return sidecar;
}

std::map<int, ObjectModel> load_models(const std::filesystem::path& models_dir,
                                       const PhysicalSidecar& physical, const std::vector<int>& only) {
  const auto info_path = models_dir / "models_info.json";
  const json info = load_json(info_path);
  if (!info.is_object()) parse_fail(info_path.string(), "top level must be an object keyed by object id");

  std::map<int, ObjectModel> models;
  for (const auto& [key, entry] : info.items()) {
    const int object_id = json_key_int(key, info_path.string());
    if (!only.empty() && std::find(only.begin(), only.end(), object_id) == only.end()) continue;
    const std::string ctx = info_path.string() + " object '" + key + "'";
    if (!entry.is_object() || !entry.contains("diameter") || !entry["diameter"].is_number()) {
      parse_fail(ctx, "missing numeric diameter");
    }

    std::vector<RigidTransform> discrete;
    if (entry.contains("symmetries_discrete")) {
      const auto& list = entry["symmetries_discrete"];
      if (!list.is_array()) parse_fail(ctx, "symmetries_discrete must be a list");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string sctx = ctx + " symmetries_discrete[" + std::to_string(i) + "]";
        const auto m = number_array(list[i], 16, sctx);
        Mat3 r;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) r(a, b) = m[static_cast<std::size_t>(4 * a + b)];
        const Vec3 t(m[3], m[7], m[11]);
        const auto pose = checked_pose(r, t, nullptr);
        if (!pose) parse_fail(sctx, "rotation block is not a rotation");
        discrete.push_back(*pose);
      }
    }
    std::vector<ContinuousSymmetry> continuous;
    if (entry.contains("symmetries_continuous")) {
      const auto& list = entry["symmetries_continuous"];
      if (!list.is_array()) parse_fail(ctx, "symmetries_continuous must be a list");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string sctx = ctx + " symmetries_continuous[" + std::to_string(i) + "]";
        if (!list[i].is_object() || !list[i].contains("axis") || !list[i].contains("offset")) {
          parse_fail(sctx, "expected {axis, offset}");
        }
        const auto a = number_array(list[i]["axis"], 3, sctx + " axis");
        const auto o = number_array(list[i]["offset"], 3, sctx + " offset");
        Vec3 axis(a[0], a[1], a[2]);
        const double n = axis.norm();
        if (!(std::abs(n - 1.0) <= kMaxRepairableDrift)) parse_fail(sctx, "axis is not unit length");
        axis /= n;
        continuous.push_back({axis, Vec3(o[0], o[1], o[2])});
      }
    }

    const auto mesh_path = models_dir / mesh_file_name(object_id);
    if (!std::filesystem::exists(mesh_path)) {
      throw Error(ErrorKind::UnknownObject,
                  "object " + std::to_string(object_id) + " has no mesh at " + mesh_path.string());
    }

    ObjectModel model;
    model.object_id = object_id;
    model.vertices = read_ply_vertices(mesh_path);
    model.metric_vertices = subsample_vertices(model.vertices);
    model.diameter = entry["diameter"].get<double>();
    model.symmetry = SymmetrySpec::make(std::move(discrete), std::move(continuous));
    const auto params = physical.lookup(object_id);
    model.mass_kg = params.mass_kg;
    model.friction_coefficient = params.friction;
    model.mesh_path = mesh_path.string();
    try {
      model.validate();
    } catch (const Error& e) {
      parse_fail(ctx, e.what());
    }

    const double recomputed = max_pairwise_distance(model.vertices);
    if (model.diameter < recomputed * (1.0 - 1e-6)) {
      log::warn("object " + std::to_string(object_id) + ": models_info diameter " +
                format_double(model.diameter) + " mm is below the mesh extent " +
                format_double(recomputed) + " mm");
    }
    models.emplace(object_id, std::move(model));
  }
  for (const int id : only) {
    if (!models.contains(id)) {
      throw Error(ErrorKind::UnknownObject, "object " + std::to_string(id) + " is not listed in " + info_path.string());
    }
  }
  return models;
}

EstimateFile parse_estimates(std::istream& in, const std::string& source) {
  static constexpr std::string_view kHeader = "scene_id,im_id,obj_id,score,R,t,time";
  EstimateFile file;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      if (text != kHeader) {
        parse_fail(source + " row " + std::to_string(line_no),
                   "expected header '" + std::string(kHeader) + "'");
      }
      have_header = true;
      continue;
    }
    const std::string ctx = source + " row " + std::to_string(line_no);
    const auto fields = split(text, ',');
    if (fields.size() != 7) parse_fail(ctx, "expected 7 comma-separated fields, got " + std::to_string(fields.size()));
    const auto scene = parse_int(fields[0]);
    const auto image = parse_int(fields[1]);
    const auto object = parse_int(fields[2]);
    const auto score = parse_double(fields[3]);
    const auto time = parse_double(fields[6]);
    if (!scene || !image || !object) parse_fail(ctx, "scene_id, im_id and obj_id must be integers");
    if (!score) parse_fail(ctx, "score is not a number");
    if (!time) parse_fail(ctx, "time is not a number");
    const auto r_tokens = split_whitespace(fields[4]);
    const auto t_tokens = split_whitespace(fields[5]);
    if (r_tokens.size() != 9) parse_fail(ctx, "R must have 9 values, got " + std::to_string(r_tokens.size()));
    if (t_tokens.size() != 3) parse_fail(ctx, "t must have 3 values, got " + std::to_string(t_tokens.size()));
    Mat3 r;
    for (int i = 0; i < 9; ++i) {
      const auto v = parse_double(r_tokens[static_cast<std::size_t>(i)]);
      if (!v) parse_fail(ctx, "R value " + std::to_string(i) + " is not a number");
      r(i / 3, i % 3) = *v;
    }
    Vec3 t;
    for (int i = 0; i < 3; ++i) {
      const auto v = parse_double(t_tokens[static_cast<std::size_t>(i)]);
      if (!v) parse_fail(ctx, "t value " + std::to_string(i) + " is not a number");
      t[i] = *v;
    }
    double drift = 0;
    const auto pose = checked_pose(r, t, &drift);
    if (!pose) {
      file.rejected.push_back({line_no, drift, "rotation drift " + format_double(drift) + " exceeds repair limit"});
      log::warn(ctx + ": rejected, rotation drift " + format_double(drift));
      continue;
    }
    EstimateRecord rec;
    rec.scene_id = static_cast<int>(*scene);
    rec.image_id = static_cast<int>(*image);
    rec.object_id = static_cast<int>(*object);
    rec.score = *score;
    rec.pose = *pose;
    rec.inference_time = *time;
    rec.row = line_no;
    file.records.push_back(rec);
  }
  if (!have_header || (file.records.empty() && file.rejected.empty())) {
    throw Error(ErrorKind::EmptyFile, source + ": no estimate rows");
  }
  return file;
}

EstimateFile load_estimates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  return parse_estimates(in, path.string());
}

void write_estimates(std::ostream& out, const std::vector<EstimateRecord>& records) {
  out << "scene_id,im_id,obj_id,score,R,t,time\n";
  for (const auto& r : records) {
    out << r.scene_id << ',' << r.image_id << ',' << r.object_id << ',' << format_double(r.score) << ',';
    const auto& m = r.pose.rotation();
    for (int i = 0; i < 9; ++i) out << (i ? " " : "") << format_double(m(i / 3, i % 3));
    out << ',';
    const auto& t = r.pose.translation();
    out << format_double(t.x()) << ' ' << format_double(t.y()) << ' ' << format_double(t.z()) << ','
        << format_double(r.inference_time) << '\n';
  }
}

MatchResult match_records(const std::vector<EstimateRecord>& estimates,
                          const std::vector<GroundTruthRecord>& ground_truth, double visibility_min,
                          DuplicatePolicy policy) {
  using Key = std::tuple<int, int, int>;
  MatchResult result;

  std::map<Key, std::vector<const GroundTruthRecord*>> visible;
  for (const auto& gt : ground_truth) {
    if (gt.visibility < visibility_min) {
      result.excluded_ground_truth.push_back(gt);
      continue;
    }
    visible[{gt.scene_id, gt.image_id, gt.object_id}].push_back(&gt);
  }

  std::map<Key, std::vector<const EstimateRecord*>> by_key;
  std::set<Key> excluded_keys;
  for (const auto& gt : result.excluded_ground_truth) excluded_keys.insert({gt.scene_id, gt.image_id, gt.object_id});
  for (const auto& e : estimates) by_key[{e.scene_id, e.image_id, e.object_id}].push_back(&e);

  for (auto& [key, list] : by_key) {
    const auto vis_it = visible.find(key);
    if (vis_it == visible.end()) {
      // Estimates for ground truth dropped by the visibility filter follow it
      // into the exclusion list; anything else has no ground truth at all.
      auto& sink = excluded_keys.contains(key) ? result.excluded_estimates : result.spurious_estimates;
      for (const auto* e : list) sink.push_back(*e);
      continue;
    }
    std::stable_sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->score > b->score; });
    auto& instances = vis_it->second;
    const std::size_t take = std::min(instances.size(), list.size());
    if (policy == DuplicatePolicy::strict && list.size() > take && list[take - 1]->score == list[take]->score) {
      throw Error(ErrorKind::DuplicateKey,
                  "estimates at rows " + std::to_string(list[take - 1]->row) + " and " +
                      std::to_string(list[take]->row) + " tie on score for scene " + std::to_string(std::get<0>(key)) +
                      " image " + std::to_string(std::get<1>(key)) + " object " + std::to_string(std::get<2>(key)));
    }
    std::vector<bool> used(instances.size(), false);
    for (std::size_t i = 0; i < take; ++i) {
      const auto* est = list[i];
      std::size_t best = instances.size();
      double best_d = HUGE_VAL;
      for (std::size_t g = 0; g < instances.size(); ++g) {
        if (used[g]) continue;
        const double d = (est->pose.translation() - instances[g]->pose.translation()).norm();
        if (d < best_d) {
          best_d = d;
          best = g;
        }
      }
      used[best] = true;
      result.pairs.push_back({*est, *instances[best]});
    }
    for (std::size_t i = take; i < list.size(); ++i) result.dropped_duplicates.push_back(*list[i]);
  }
  for (const auto& [key, instances] : visible) {
    const auto est_it = by_key.find(key);
    const std::size_t matched = est_it == by_key.end() ? 0 : std::min(instances.size(), est_it->second.size());
    if (matched == instances.size()) continue;
    // Instances that were paired are marked by pointer identity.
    for (const auto* gt : instances) {
      const bool paired = std::any_of(result.pairs.begin(), result.pairs.end(), [&](const MatchedPair& p) {
        return p.ground_truth.scene_id == gt->scene_id && p.ground_truth.image_id == gt->image_id &&
               p.ground_truth.object_id == gt->object_id && p.ground_truth.instance == gt->instance;
      });
      if (!paired) result.unmatched_ground_truth.push_back(*gt);
    }
  }
  const auto pair_order = [](const MatchedPair& a, const MatchedPair& b) {
    return std::tie(a.ground_truth.scene_id, a.ground_truth.image_id, a.ground_truth.object_id,
                    a.ground_truth.instance) <
           std::tie(b.ground_truth.scene_id, b.ground_truth.image_id, b.ground_truth.object_id,
                    b.ground_truth.instance);
  };
  std::sort(result.pairs.begin(), result.pairs.end(), pair_order);
  return result;
}

}  // namespace poseval
