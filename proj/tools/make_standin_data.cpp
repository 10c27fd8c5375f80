// Generates the stand-in datasets under data/standin: primitive-built object
// meshes in BOP layout, physical parameters, a reference-grasp catalog whose
// entries are checked with the library surrogate, synthetic test scenes and
// two synthetic estimator result files per dataset.
//
//   make_standin_data <output data/standin directory>

#include "poseval/bop_io.hpp"
#include "poseval/deviation.hpp"
#include "poseval/grasp_trial.hpp"
#include "poseval/pipeline.hpp"
#include "poseval/ply.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace poseval;

namespace {

constexpr double kPi = std::numbers::pi;

// ------------------------------------------------------------------ shapes

struct Primitive {
  virtual ~Primitive() = default;
  virtual void sample(double spacing, std::vector<Vec3>& out) const = 0;
  virtual bool inside(const Vec3& p, double margin) const = 0;
};

int steps_for(double length, double spacing) { return std::max(1, static_cast<int>(std::ceil(length / spacing))); }

struct Box final : Primitive {
  Vec3 center, size;
  Box(Vec3 c, Vec3 s) : center(c), size(s) {}

  void sample(double h, std::vector<Vec3>& out) const override {
    const Vec3 lo = center - size / 2;
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const int nu = steps_for(size[u], h), nv = steps_for(size[v], h);
      for (const double side : {0.0, 1.0}) {
        for (int i = 0; i <= nu; ++i)
          for (int k = 0; k <= nv; ++k) {
            Vec3 p;
            p[axis] = lo[axis] + side * size[axis];
            p[u] = lo[u] + size[u] * i / nu;
            p[v] = lo[v] + size[v] * k / nv;
            out.push_back(p);
          }
      }
    }
  }
  bool inside(const Vec3& p, double m) const override {
    return ((p - center).cwiseAbs().array() < (size / 2).array() - m).all();
  }
};

// Cylinder along z.
struct Cylinder final : Primitive {
  Vec3 center;
  double radius, height;
  Cylinder(Vec3 c, double r, double h) : center(c), radius(r), height(h) {}

  void sample(double h, std::vector<Vec3>& out) const override {
    const int nz = steps_for(height, h);
    const int nc = steps_for(2 * kPi * radius, h);
    for (int i = 0; i <= nz; ++i)
      for (int k = 0; k < nc; ++k) {
        const double a = 2 * kPi * k / nc;
        out.push_back(center + Vec3(radius * std::cos(a), radius * std::sin(a), -height / 2 + height * i / nz));
      }
    for (const double z : {-height / 2, height / 2}) {
      out.push_back(center + Vec3(0, 0, z));
      const int nr = steps_for(radius, h);
      for (int ring = 1; ring < nr; ++ring) {
        const double r = radius * ring / nr;
        const int n = steps_for(2 * kPi * r, h);
        for (int k = 0; k < n; ++k) {
          const double a = 2 * kPi * (k + 0.5 * ring) / n;
          out.push_back(center + Vec3(r * std::cos(a), r * std::sin(a), z));
        }
      }
    }
  }
  bool inside(const Vec3& p, double m) const override {
    const Vec3 d = p - center;
    return std::hypot(d.x(), d.y()) < radius - m && std::abs(d.z()) < height / 2 - m;
  }
};

struct Ellipsoid final : Primitive {
  Vec3 center, radii;
  Ellipsoid(Vec3 c, Vec3 r) : center(c), radii(r) {}

  void sample(double h, std::vector<Vec3>& out) const override {
    const int nt = steps_for(kPi * radii.maxCoeff(), h);
    for (int i = 0; i <= nt; ++i) {
      const double t = kPi * i / nt;
      const double ring = std::sin(t) * std::max(radii.x(), radii.y());
      const int n = (i == 0 || i == nt) ? 1 : steps_for(2 * kPi * ring, h);
      for (int k = 0; k < n; ++k) {
        const double a = 2 * kPi * (k + 0.5 * (i % 2)) / n;
        out.push_back(center + Vec3(radii.x() * std::sin(t) * std::cos(a), radii.y() * std::sin(t) * std::sin(a),
                                    radii.z() * std::cos(t)));
      }
    }
  }
  bool inside(const Vec3& p, double m) const override {
    const Vec3 d = (p - center).cwiseQuotient(radii - Vec3::Constant(m));
    return d.squaredNorm() < 1;
  }
};

// Stadium outline in xy (width along x, length along y), extruded along z.
struct Stadium final : Primitive {
  Vec3 center;
  double width, length, height;
  Stadium(Vec3 c, double w, double l, double h) : center(c), width(w), length(l), height(h) {}

  double radius() const { return width / 2; }
  double straight() const { return length - width; }

  std::vector<Vec2> outline(double h, double r) const {
    std::vector<Vec2> pts;
    const double s = straight();
    const int ns = steps_for(s, h);
    for (const double sx : {-1.0, 1.0}) {
      for (int i = 0; i < ns; ++i) pts.emplace_back(sx * r, sx * (-s / 2 + s * i / ns));
      const int na = steps_for(kPi * r, h);
      for (int i = 0; i < na; ++i) {
        const double a = (sx > 0 ? 0.0 : kPi) + kPi * i / na;
        pts.emplace_back(r * std::cos(a), sx * s / 2 + r * std::sin(a));
      }
    }
    return pts;
  }

  void sample(double h, std::vector<Vec3>& out) const override {
    const auto ring = outline(h, radius());
    const int nz = steps_for(height, h);
    for (int i = 0; i <= nz; ++i)
      for (const auto& q : ring) out.push_back(center + Vec3(q.x(), q.y(), -height / 2 + height * i / nz));
    const int nr = steps_for(radius(), h);
    for (const double z : {-height / 2, height / 2}) {
      for (int k = 0; k < nr; ++k) {
        const double r = radius() * k / nr;
        if (k == 0) {
          const int n = steps_for(straight(), h);
          for (int i = 0; i <= n; ++i) out.push_back(center + Vec3(0, -straight() / 2 + straight() * i / n, z));
          continue;
        }
        for (const auto& q : outline(h, r)) out.push_back(center + Vec3(q.x(), q.y(), z));
      }
    }
  }
  bool inside(const Vec3& p, double m) const override {
    const Vec3 d = p - center;
    if (std::abs(d.z()) >= height / 2 - m) return false;
    const double cy = std::clamp(d.y(), -straight() / 2, straight() / 2);
    return std::hypot(d.x(), d.y() - cy) < radius() - m;
  }
};

using Shape = std::vector<std::unique_ptr<Primitive>>;

std::vector<Vec3> sample_shape(const Shape& shape, double spacing) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    std::vector<Vec3> pts;
    shape[i]->sample(spacing, pts);
    for (const auto& p : pts) {
      bool hidden = false;
      for (std::size_t k = 0; k < shape.size() && !hidden; ++k) hidden = k != i && shape[k]->inside(p, 0.25);
      if (!hidden) out.push_back(p);
    }
  }
  // Drop coincident samples on shared edges.
  std::set<std::tuple<long, long, long>> seen;
  std::vector<Vec3> unique;
  for (const auto& p : out) {
    const auto key = std::tuple(std::lround(p.x() * 1e4), std::lround(p.y() * 1e4), std::lround(p.z() * 1e4));
    if (seen.insert(key).second) unique.push_back(p);
  }
  // Centre on the bounding box, as BOP models are.
  Vec3 lo = unique.front(), hi = unique.front();
  for (const auto& p : unique) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 c = (lo + hi) / 2;
  for (auto& p : unique) {
    p -= c;
    for (int i = 0; i < 3; ++i) p[i] = std::round(p[i] * 1e6) / 1e6;
  }
  return unique;
}

template <class T, class... A>
void add(Shape& s, A&&... args) {
  s.push_back(std::make_unique<T>(std::forward<A>(args)...));
}

struct ObjectDef {
  int id;
  std::string name;
  double mass_kg;
  double friction;
  std::function<Shape()> build;
  std::vector<RigidTransform> discrete;
  std::vector<ContinuousSymmetry> continuous;
  double noise_scale;  // relative difficulty for the synthetic estimators
};

RigidTransform rz180() { return RigidTransform::from_rotation(rot_z(180)); }

std::vector<ObjectDef> lmo_objects() {
  std::vector<ObjectDef> v;
  v.push_back({1, "ape", 0.08, 0.6, [] {
                 Shape s;
                 add<Ellipsoid>(s, Vec3(0, 0, 0), Vec3(26, 22, 30));
                 add<Ellipsoid>(s, Vec3(0, 4, 38), Vec3(18, 16, 16));
                 add<Cylinder>(s, Vec3(0, 0, -32), 14.0, 10.0);
                 return s;
               }, {}, {}, 1.4});
  v.push_back({5, "can", 0.35, 0.5, [] {
                 Shape s;
                 add<Cylinder>(s, Vec3(0, 0, 0), 36.0, 130.0);
                 add<Box>(s, Vec3(62, 0, 20), Vec3(56, 14, 14));
                 add<Box>(s, Vec3(-42, 0, 40), Vec3(14, 12, 60));
                 return s;
               }, {}, {}, 0.9});
  v.push_back({6, "cat", 0.12, 0.6, [] {
                 Shape s;
                 add<Ellipsoid>(s, Vec3(0, 0, 0), Vec3(28, 45, 35));
                 add<Ellipsoid>(s, Vec3(0, 30, 40), Vec3(22, 20, 18));
                 return s;
               }, {}, {}, 1.1});
  v.push_back({8, "driller", 1.2, 0.5, [] {
                 Shape s;
                 add<Box>(s, Vec3(0, 40, 60), Vec3(60, 180, 70));
                 add<Box>(s, Vec3(0, -20, -20), Vec3(50, 45, 130));
                 add<Box>(s, Vec3(0, -20, -100), Vec3(64, 80, 30));
                 return s;
               }, {}, {}, 0.8});
  v.push_back({9, "duck", 0.06, 0.6, [] {
                 Shape s;
                 add<Ellipsoid>(s, Vec3(0, 0, 0), Vec3(28, 38, 24));
                 add<Ellipsoid>(s, Vec3(0, 22, 28), Vec3(16, 16, 16));
                 return s;
               }, {}, {}, 1.6});
  v.push_back({10, "eggbox", 0.05, 0.5, [] {
                  Shape s;
                  add<Box>(s, Vec3(0, 0, 0), Vec3(140, 110, 70));
                  return s;
                }, {rz180()}, {}, 2.2});
  v.push_back({11, "glue", 0.07, 0.5, [] {
                  Shape s;
                  add<Stadium>(s, Vec3(0, 0, 0), 24.0, 40.0, 90.0);
                  add<Cylinder>(s, Vec3(0, 0, 55), 8.0, 20.0);
                  return s;
                }, {rz180()}, {}, 1.8});
  v.push_back({12, "holepuncher", 0.45, 0.5, [] {
                  Shape s;
                  add<Box>(s, Vec3(0, 0, 0), Vec3(60, 110, 50));
                  add<Box>(s, Vec3(0, -10, 33), Vec3(40, 80, 16));
                  return s;
                }, {}, {}, 1.0});
  return v;
}

std::vector<ObjectDef> ycbv_objects() {
  std::vector<ObjectDef> v;
  v.push_back({2, "cracker_box", 0.41, 0.5, [] {
                 Shape s;
                 add<Box>(s, Vec3(0, 0, 0), Vec3(60, 158, 210));
                 return s;
               }, {}, {}, 1.2});
  v.push_back({3, "sugar_box", 0.51, 0.5, [] {
                 Shape s;
                 add<Box>(s, Vec3(0, 0, 0), Vec3(38, 89, 175));
                 return s;
               }, {}, {}, 0.6});
  v.push_back({4, "tomato_soup_can", 0.35, 0.45, [] {
                 Shape s;
                 add<Cylinder>(s, Vec3(0, 0, 0), 33.5, 101.0);
                 return s;
               }, {}, {{Vec3::UnitZ(), Vec3::Zero()}}, 1.0});
  v.push_back({5, "mustard_bottle", 0.6, 0.45, [] {
                 Shape s;
                 add<Stadium>(s, Vec3(0, 0, -10), 58.0, 95.0, 170.0);
                 add<Cylinder>(s, Vec3(0, 10, 85), 12.0, 20.0);
                 return s;
               }, {}, {}, 0.9});
  v.push_back({8, "gelatin_box", 0.1, 0.5, [] {
                 Shape s;
                 add<Box>(s, Vec3(0, 0, 0), Vec3(73, 89, 28));
                 return s;
               }, {}, {}, 1.5});
  v.push_back({9, "potted_meat_can", 0.37, 0.45, [] {
                 Shape s;
                 add<Box>(s, Vec3(0, 0, 0), Vec3(51, 102, 84));
                 return s;
               }, {}, {}, 1.3});
  v.push_back({12, "bleach_cleanser", 1.13, 0.45, [] {
                  Shape s;
                  add<Stadium>(s, Vec3(0, 0, -15), 65.0, 100.0, 220.0);
                  add<Cylinder>(s, Vec3(0, 15, 110), 14.0, 30.0);
                  return s;
                }, {}, {}, 1.1});
  return v;
}

// ------------------------------------------------------------------ grasps

Mat3 hand_rotation(const Vec3& approach, const Vec3& closing) {
  Mat3 r;
  r.col(2) = approach.normalized();
  r.col(0) = closing.normalized();
  r.col(1) = r.col(2).cross(r.col(0));
  return orthonormalize(r);
}

struct Bounds {
  Vec3 lo, hi;
};

Bounds bounds_of(const std::vector<Vec3>& v, const RigidTransform& pose) {
  Bounds b{Vec3::Constant(HUGE_VAL), Vec3::Constant(-HUGE_VAL)};
  for (const auto& p : v) {
    const Vec3 q = pose.apply(p);
    b.lo = b.lo.cwiseMin(q);
    b.hi = b.hi.cwiseMax(q);
  }
  return b;
}

Vec3 centroid_of(const std::vector<Vec3>& v, const RigidTransform& pose) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : v) c += pose.apply(p);
  return c / static_cast<double>(v.size());
}

struct Candidate {
  std::string label;
  Mat3 rotation;
  std::vector<Vec3> positions;  // hand origins for the parallel gripper
  std::vector<Vec3> positions_under;
};

// Hand orientations to try, top-down first. Each also lists hand origins.
std::vector<Candidate> candidates(const ObjectModel& m, const RigidTransform& sim, const GripperModel& par) {
  const Bounds b = bounds_of(m.vertices, sim);
  const Vec3 c = centroid_of(m.vertices, sim);
  const Vec3 mid = (b.lo + b.hi) / 2;
  std::vector<Candidate> out;

  for (const double yaw : {0.0, 90.0, 45.0, 135.0}) {
    Candidate cand;
    cand.label = "top-down yaw " + format_fixed(yaw, 0);
    const Vec3 closing(std::cos(yaw * kPi / 180), std::sin(yaw * kPi / 180), 0);
    cand.rotation = hand_rotation(-Vec3::UnitZ(), closing);
    const double top = b.hi.z();
    for (double engage = 4; engage <= par.finger_depth + 30; engage += 2) {
      // Fingertips reach `engage` mm below the top, never below the table.
      const double palm_z = std::max(top - engage + par.finger_length, par.finger_length + 1);
      for (double dx = -12; dx <= 12; dx += 6)
        for (double dy = -12; dy <= 12; dy += 6)
          cand.positions.push_back(Vec3(mid.x() + dx, mid.y() + dy, palm_z));
    }
    for (double gap = 2; gap <= 40; gap += 4) cand.positions_under.push_back(Vec3(c.x(), c.y(), top + gap));
    out.push_back(std::move(cand));
  }
  for (const double dir : {0.0, 90.0, 180.0, 270.0}) {
    Candidate cand;
    cand.label = "side " + format_fixed(dir, 0);
    const Vec3 approach(std::cos(dir * kPi / 180), std::sin(dir * kPi / 180), 0);
    const Vec3 closing = Vec3::UnitZ().cross(approach);
    cand.rotation = hand_rotation(approach, closing);
    // Distance from the centre to the near face along the approach.
    double near = HUGE_VAL;
    for (const auto& p : m.vertices) near = std::min(near, (sim.apply(p) - mid).dot(approach));
    for (double height = par.palm_half_height + 1; height <= b.hi.z() - par.pad_width / 2; height += 8) {
      for (double engage = 4; engage <= par.finger_depth + 30; engage += 3) {
        const double standoff = -near + par.finger_length - engage;
        const Vec3 origin = Vec3(mid.x(), mid.y(), height) - approach * standoff;
        for (double lateral = -8; lateral <= 8; lateral += 4) {
          cand.positions.push_back(origin + closing * lateral);
        }
      }
    }
    for (double gap = 2; gap <= 30; gap += 4) {
      cand.positions_under.push_back(Vec3(c.x(), c.y(), c.z()) - approach * (-near + gap) +
                                     approach * ((c - mid).dot(approach)));
    }
    out.push_back(std::move(cand));
  }
  return out;
}

ReferenceGrasp make_ref(const ObjectModel& m, GripperKind kind, int index, const RigidTransform& hand) {
  ReferenceGrasp r;
  r.gripper = kind;
  r.object_id = m.object_id;
  r.grasp_index = index;
  r.hand_pose_ref = hand;
  r.approach_offset = Vec3(0, 0, -100);
  r.lift_height = 100;
  r.target_hand_object_distance = 1;  // replaced after a zero-deviation run
  return r;
}

// Zero deviation must succeed, gross translations must fail; the score counts
// small perturbations that still succeed so the chosen pose is not marginal.
std::optional<std::pair<ReferenceGrasp, int>> evaluate_grasp(const ObjectModel& m, const RigidTransform& sim,
                                                             const GripperModel& g, ReferenceGrasp ref) {
  const TrialSpec zero{&m, sim, ref.hand_pose_ref, ref};
  const auto out = surrogate_outcome(zero, g);
  if (out.stage != FailureStage::none && out.stage != FailureStage::tolerance_exceeded) return std::nullopt;
  ref.target_hand_object_distance = std::round(out.final_distance_mm * 1e6) / 1e6;
  const TrialSpec fixed{&m, sim, ref.hand_pose_ref, ref};
  if (!surrogate_outcome(fixed, g).success) return std::nullopt;

  GraspCatalog one;
  one.set_rest_pose(m.object_id, sim);
  one.add(ref);
  std::map<int, ObjectModel> models{{m.object_id, m}};
  const auto report = validate_catalog(one, models, {{g.kind, g}});
  if (!report.ok()) return std::nullopt;

  int score = 0;
  for (const double d : {-4.0, -2.0, 2.0, 4.0})
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 shift = Vec3::Zero();
      shift[axis] = d;
      const TrialSpec s{&m, sim, RigidTransform::from_translation(shift) * ref.hand_pose_ref, ref};
      score += surrogate_outcome(s, g).success ? 1 : 0;
    }
  for (const double a : {-6.0, -3.0, 3.0, 6.0})
    for (int axis = 0; axis < 3; ++axis) {
      const RigidTransform rot = RigidTransform::from_rotation(axis_angle(Vec3::Unit(axis), a));
      const RigidTransform about_object = RigidTransform::from_translation(centroid_of(m.vertices, sim)) * rot *
                                          RigidTransform::from_translation(-centroid_of(m.vertices, sim));
      const TrialSpec s{&m, sim, about_object * ref.hand_pose_ref, ref};
      score += surrogate_outcome(s, g).success ? 1 : 0;
    }
  return std::pair(ref, score);
}

std::optional<ReferenceGrasp> best_grasp(const ObjectModel& m, const RigidTransform& sim, const GripperModel& g,
                                         int index, const Mat3& rotation, const std::vector<Vec3>& positions) {
  std::optional<ReferenceGrasp> best;
  int best_score = -1;
  for (const auto& p : positions) {
    const auto res = evaluate_grasp(m, sim, g, make_ref(m, g.kind, index, RigidTransform::nearest(rotation, p)));
    if (res && res->second > best_score) {
      best = res->first;
      best_score = res->second;
    }
  }
  return best;
}

// ------------------------------------------------------------------ output

ordered_json pose_json(const RigidTransform& p) {
  ordered_json r = ordered_json::array(), t = ordered_json::array();
  for (int i = 0; i < 9; ++i) r.push_back(p.rotation()(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) t.push_back(p.translation()[i]);
  return {{"R", r}, {"t", t}};
}

std::string scene_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

std::string mesh_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "obj_%06d.ply", id);
  return buf;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

struct SyntheticEstimator {
  std::string name;
  double rot_sigma_deg;
  double trans_sigma_mm;
  double miss_rate;
};

struct DatasetSpec {
  std::string name;
  std::vector<ObjectDef> objects;
  CameraIntrinsics camera;
  std::uint64_t seed;
};

void write_dataset(const fs::path& root, const DatasetSpec& spec, const std::map<GripperKind, GripperModel>& grippers) {
  const fs::path dir = root / spec.name;
  fs::create_directories(dir / "models");

  // Models.
  ordered_json info;
  ordered_json physical;
  physical["_note"] = "mass_kg and friction per object id; 'default' applies to unlisted objects";
  std::map<int, ObjectModel> models;
  PhysicalSidecar sidecar;
  int counter = 0;
  for (const auto& def : spec.objects) {
    const auto verts = sample_shape(def.build(), 3.5);
    const PlyEncoding enc = (counter++ % 2 == 0) ? PlyEncoding::ascii : PlyEncoding::binary_little_endian;
    std::ofstream ply(dir / "models" / mesh_file(def.id), std::ios::binary);
    write_ply_vertices(ply, verts, enc);
    ply.close();
    const double diameter = std::round(max_pairwise_distance(verts, 20000) * 1e4) / 1e4;
    Vec3 lo = verts.front(), hi = verts.front();
    for (const auto& p : verts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    ordered_json e{{"diameter", diameter}, {"min_x", lo.x()}, {"min_y", lo.y()}, {"min_z", lo.z()},
                   {"size_x", hi.x() - lo.x()}, {"size_y", hi.y() - lo.y()}, {"size_z", hi.z() - lo.z()}};
    if (!def.discrete.empty()) {
      e["symmetries_discrete"] = ordered_json::array();
      for (const auto& s : def.discrete) {
        ordered_json m = ordered_json::array();
        const Mat4 mm = s.matrix();
        for (int i = 0; i < 16; ++i) m.push_back(std::round(mm(i / 4, i % 4) * 1e12) / 1e12 + 0.0);
        e["symmetries_discrete"].push_back(m);
      }
    }
    if (!def.continuous.empty()) {
      e["symmetries_continuous"] = ordered_json::array();
      for (const auto& c : def.continuous) {
        e["symmetries_continuous"].push_back(ordered_json{{"axis", {c.axis.x(), c.axis.y(), c.axis.z()}},
                                                          {"offset", {c.offset.x(), c.offset.y(), c.offset.z()}}});
      }
    }
    info[std::to_string(def.id)] = e;
    physical[std::to_string(def.id)] = ordered_json{{"name", def.name}, {"mass_kg", def.mass_kg}, {"friction", def.friction}};
    sidecar.objects[def.id] = {def.mass_kg, def.friction};
  }
  physical["default"] = ordered_json{{"mass_kg", 0.3}, {"friction", 0.5}};
  write_file(dir / "models" / "models_info.json", info.dump(2) + "\n");
  write_file(dir / "physical_params.json", physical.dump(2) + "\n");
  models = load_models(dir / "models", sidecar);

  // Catalog: two aligned grasps per object; index k uses the same hand
  // rotation for both grippers.
  GraspCatalog catalog;
  const auto& par = grippers.at(GripperKind::parallel);
  const auto& und = grippers.at(GripperKind::underactuated);
  for (const auto& [id, model] : models) {
    const RigidTransform sim = default_rest_pose(model.vertices);
    catalog.set_rest_pose(id, sim);
    int index = 0;
    bool parallel_possible = true;
    const auto cands = candidates(model, sim, par);
    // Parallel-capable orientations first; fall back to underactuated-only.
    for (int pass = 0; pass < 2 && index < 2; ++pass) {
      for (const auto& cand : cands) {
        if (index >= 2) break;
        const auto u = best_grasp(model, sim, und, index, cand.rotation, cand.positions_under);
        if (!u) continue;
        if (pass == 0) {
          const auto p = best_grasp(model, sim, par, index, cand.rotation, cand.positions);
          if (!p) continue;
          catalog.add(*p);
          catalog.add(*u);
          std::cerr << spec.name << " obj " << id << " grasp " << index << ": " << cand.label << "\n";
          ++index;
        } else {
          parallel_possible = false;
          catalog.add(*u);
          std::cerr << spec.name << " obj " << id << " grasp " << index << " (underactuated only): " << cand.label << "\n";
          ++index;
        }
      }
      if (pass == 0 && index > 0) break;
    }
    if (index < 2) std::cerr << "WARNING: " << spec.name << " obj " << id << " has only " << index << " grasps\n";
    if (!parallel_possible) std::cerr << spec.name << " obj " << id << ": no parallel grasp\n";
  }
  write_file(dir / "grasp_catalog.json", grasp_catalog_json(catalog));

  // Scenes: one scene, every object once per image, random poses in front of the camera.
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0, 1);
  const int scene_id = 1;
  const int images = 24;
  ordered_json gt_json, info_json, cam_json;
  struct Gt {
    int image, object, instance;
    RigidTransform pose;
    double vis;
  };
  std::vector<Gt> gts;
  for (int im = 0; im < images; ++im) {
    ordered_json list = ordered_json::array(), vis_list = ordered_json::array();
    int inst = 0;
    for (const auto& def : spec.objects) {
      const Vec3 t((uni(rng) - 0.5) * 300, (uni(rng) - 0.5) * 200, 650 + uni(rng) * 400);
      const RigidTransform pose(random_rotation(rng), t);
      const double vis = std::round((uni(rng) < 0.15 ? uni(rng) * 0.5 : 0.5 + 0.5 * uni(rng)) * 1e4) / 1e4;
      list.push_back(ordered_json{{"cam_R_m2c", pose_json(pose)["R"]}, {"cam_t_m2c", pose_json(pose)["t"]},
                                  {"obj_id", def.id}});
      vis_list.push_back(ordered_json{{"visib_fract", vis}, {"px_count_visib", static_cast<int>(vis * 4000)}});
      gts.push_back({im, def.id, inst++, pose, vis});
    }
    gt_json[std::to_string(im)] = list;
    info_json[std::to_string(im)] = vis_list;
    const auto& k = spec.camera;
    cam_json[std::to_string(im)] =
        ordered_json{{"cam_K", {k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0}}, {"depth_scale", 1.0}};
  }
  const fs::path scene_dir = dir / "test" / scene_name(scene_id);
  write_file(scene_dir / "scene_gt.json", gt_json.dump(2) + "\n");
  write_file(scene_dir / "scene_gt_info.json", info_json.dump(2) + "\n");
  write_file(scene_dir / "scene_camera.json", cam_json.dump(2) + "\n");

  // Synthetic estimators: depth-dominated translation noise scaled per object.
  const std::vector<SyntheticEstimator> estimators{{"synth_good", 1.5, 4.0, 0.02}, {"synth_weak", 4.0, 12.0, 0.06}};
  ordered_json results = ordered_json::array();
  for (const auto& est : estimators) {
    std::normal_distribution<double> n(0, 1);
    std::vector<EstimateRecord> rows;
    for (const auto& g : gts) {
      const auto def = std::find_if(spec.objects.begin(), spec.objects.end(), [&](const ObjectDef& d) { return d.id == g.object; });
      if (uni(rng) < est.miss_rate) continue;
      const double s = def->noise_scale;
      const Vec3 axis(n(rng), n(rng), n(rng));
      const Mat3 r = axis_angle(axis, n(rng) * est.rot_sigma_deg * s) * g.pose.rotation();
      const Vec3 t = g.pose.translation() +
                     Vec3(n(rng) * est.trans_sigma_mm * s * 0.4, n(rng) * est.trans_sigma_mm * s * 0.4,
                          n(rng) * est.trans_sigma_mm * s);
      EstimateRecord e;
      e.scene_id = scene_id;
      e.image_id = g.image;
      e.object_id = g.object;
      e.score = std::round(uni(rng) * 1e4) / 1e4;
      Mat3 rr = orthonormalize(r);
      for (int i = 0; i < 9; ++i) rr(i / 3, i % 3) = std::round(rr(i / 3, i % 3) * 1e12) / 1e12;
      e.pose = RigidTransform::nearest(rr, t.unaryExpr([](double v) { return std::round(v * 1e6) / 1e6; }));
      e.inference_time = std::round((0.02 + 0.05 * uni(rng)) * 1e4) / 1e4;
      rows.push_back(e);
    }
    std::ostringstream csv;
    write_estimates(csv, rows);
    const std::string file = est.name + "_" + spec.name + "-test.csv";
    write_file(dir / "results" / file, csv.str());
    results.push_back(ordered_json{{"name", est.name}, {"path", "results/" + file}});
  }

  ordered_json cfg{{"dataset_root", "."},
                   {"result_files", results},
                   {"visibility_min", 0.5},
                   {"gripper_config", "../grippers.json"},
                   {"grasp_catalog", "grasp_catalog.json"},
                   {"physical_sidecar", "physical_params.json"},
                   {"outcome_model", "surrogate"},
                   {"grasp_index", 0},
                   {"tolerance_mm", 50},
                   {"hold_s", 15},
                   {"output_dir", "../../../out/" + spec.name},
                   {"grippers", {"parallel", "underactuated"}}};
  write_file(dir / "run_config.json", cfg.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2 && argc != 3) {
    std::cerr << "usage: make_standin_data <data/standin directory> [seed offset]\n";
    return 1;
  }
  const fs::path root = argv[1];
  const std::uint64_t offset = argc == 3 ? std::stoull(argv[2]) : 0;
  try {
    ordered_json grippers_json;
    grippers_json["_note"] =
        "Hand frame: z approach (palm face at z = 0), x closing, y across the pads. Lengths in mm, angles in degrees.";
    const GripperModel p = GripperModel::parallel_default();
    grippers_json["parallel"] = ordered_json{{"stroke", p.stroke},
                                             {"finger_length", p.finger_length},
                                             {"finger_depth", p.finger_depth},
                                             {"pad_width", p.pad_width},
                                             {"finger_thickness", p.finger_thickness},
                                             {"palm_half_width", p.palm_half_width},
                                             {"palm_half_height", p.palm_half_height},
                                             {"palm_thickness", p.palm_thickness},
                                             {"contact_band", p.contact_band},
                                             {"grip_force_n", p.grip_force_n},
                                             {"friction_with_object", p.friction_with_object}};
    const GripperModel u = GripperModel::underactuated_default();
    grippers_json["underactuated"] = ordered_json{{"finger_span", u.finger_span},
                                                  {"finger_depth", u.finger_depth},
                                                  {"rotation_tolerance", u.rotation_tolerance},
                                                  {"friction_with_object", u.friction_with_object}};
    write_file(root / "grippers.json", grippers_json.dump(2) + "\n");
    const auto grippers = load_gripper_config(root / "grippers.json");

    write_dataset(root, {"lmo", lmo_objects(), CameraIntrinsics::make(572.4114, 573.57043, 325.2611, 242.04899), 17},
                  grippers);
    write_dataset(root, {"ycbv", ycbv_objects(), CameraIntrinsics::make(1066.778, 1067.487, 312.9869, 241.3109), 29 + offset},
                  grippers);
  } catch (const std::exception& e) {
    std::cerr << "make_standin_data: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
