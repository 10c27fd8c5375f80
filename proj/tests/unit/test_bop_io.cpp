#include "poseval/bop_io.hpp"
#include "poseval/error.hpp"
#include "poseval/ply.hpp"
#include "poseval/text_format.hpp"

#include "doctest.h"
#include "support/test_support.hpp"

#include <sstream>

using namespace poseval;
using testing_support::TempDir;

namespace {

const std::filesystem::path kGolden = POSEVAL_TEST_GOLDEN_DIR;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::InvalidArgument;
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

PhysicalSidecar default_sidecar() {
  PhysicalSidecar s;
  s.fallback = PhysicalParams{0.1, 0.5};
  return s;
}

}  // namespace

TEST_CASE("scene ground truth golden fixture") {
  const auto gt = load_scene_ground_truth(kGolden / "scene" / "000002");
  REQUIRE(gt.size() == 3);
  CHECK(gt[0].scene_id == 2);
  CHECK(gt[0].image_id == 3);
  CHECK(gt[0].object_id == 1);
  CHECK(gt[0].instance == 0);
  CHECK(gt[0].pose.rotation() == Mat3::Identity());
  CHECK(gt[0].pose.translation() == Vec3(10.5, -20.25, 800.0));
  CHECK(gt[0].visibility == 0.875);

  CHECK(gt[1].image_id == 3);
  CHECK(gt[1].object_id == 2);
  CHECK(gt[1].instance == 1);
  CHECK(gt[1].pose.rotation()(0, 1) == -1);
  CHECK(gt[1].pose.rotation()(1, 0) == 1);
  CHECK(gt[1].pose.translation() == Vec3(-55.125, 12.0, 950.5));
  CHECK(gt[1].visibility == 0.4);

  CHECK(gt[2].image_id == 7);
  CHECK(gt[2].pose.rotation()(1, 2) == -0.8660254037844386);
  CHECK(gt[2].pose.translation() == Vec3(0, 0, 1000));
  CHECK(gt[2].visibility == 1.0);

  const auto cams = load_scene_cameras(kGolden / "scene" / "000002");
  REQUIRE(cams.size() == 2);
  CHECK(cams.at(3).fx == 572.4114);
  CHECK(cams.at(3).fy == 573.57043);
  CHECK(cams.at(3).cx == 325.2611);
  CHECK(cams.at(3).cy == 242.04899);
  CHECK(cams.at(7).fx == 1066.778);
}

TEST_CASE("malformed scene files map to the error taxonomy") {
  const auto bad = kGolden / "malformed";
  CHECK(kind_of([&] { load_scene_ground_truth(bad / "rot_arity" / "000001"); }) == ErrorKind::ParseError);
  CHECK(what_of([&] { load_scene_ground_truth(bad / "rot_arity" / "000001"); }).find("image '0'") != std::string::npos);
  CHECK(kind_of([&] { load_scene_ground_truth(bad / "missing_vis" / "000001"); }) == ErrorKind::MissingVisibility);
  CHECK(kind_of([&] { load_scene_ground_truth(bad / "vis_range" / "000001"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { load_scene_ground_truth(bad / "bad_json" / "000001"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { load_scene_ground_truth(bad / "no_such_scene"); }) == ErrorKind::ParseError);
}

TEST_CASE("PLY variants") {
  const auto cube = read_ply_vertices(kGolden / "models" / "obj_000001.ply");
  REQUIRE(cube.size() == 8);
  CHECK(cube[0] == Vec3(-10, -10, -10));
  CHECK(cube[7] == Vec3(10, 10, 10));
  CHECK(max_pairwise_distance(cube) == doctest::Approx(20 * std::sqrt(3.0)).epsilon(1e-15));

  const auto box = read_ply_vertices(kGolden / "models" / "obj_000002.ply");
  REQUIRE(box.size() == 8);
  CHECK(box[1] == Vec3(-5, -10, 20));
  CHECK(box[6] == Vec3(5, 10, -20));

  const auto bad = kGolden / "malformed";
  for (const char* name : {"truncated_binary.ply", "big_endian.ply", "no_magic.ply", "short_row.ply"}) {
    CAPTURE(name);
    CHECK(kind_of([&] { read_ply_vertices(bad / name); }) == ErrorKind::ParseError);
  }
}

TEST_CASE("PLY writer round trip is exact") {
  testing_support::Random rng(3);
  std::vector<Vec3> v;
  for (int i = 0; i < 50; ++i) v.push_back(rng.in_box(123.456));
  for (const auto enc : {PlyEncoding::ascii, PlyEncoding::binary_little_endian}) {
    std::stringstream s;
    write_ply_vertices(s, v, enc);
    const auto back = read_ply_vertices(s, "memory");
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]);
  }
}

TEST_CASE("models and symmetry metadata") {
  const auto models = load_models(kGolden / "models", default_sidecar());
  REQUIRE(models.size() == 2);
  const auto& cube = models.at(1);
  CHECK(cube.diameter == 34.64101615137755);
  REQUIRE(cube.symmetry.continuous_axes.size() == 1);
  CHECK(cube.symmetry.continuous_axes[0].axis == Vec3(0, 0, 1));
  CHECK(cube.symmetry.continuous_axes[0].offset == Vec3::Zero());
  CHECK(cube.symmetry.discrete.size() == 1);
  CHECK(cube.mass_kg == 0.1);
  CHECK(cube.friction_coefficient == 0.5);

  const auto& box = models.at(2);
  REQUIRE(box.symmetry.discrete.size() == 2);
  CHECK(box.symmetry.discrete[0].rotation() == Mat3::Identity());
  CHECK((box.symmetry.discrete[1].rotation() - rot_z(180)).norm() < 1e-15);
  CHECK(box.symmetry.continuous_axes.empty());

  const auto only = load_models(kGolden / "models", default_sidecar(), {2});
  CHECK(only.size() == 1);
  CHECK(kind_of([&] { load_models(kGolden / "malformed" / "missing_mesh", default_sidecar()); }) ==
        ErrorKind::UnknownObject);
  CHECK(kind_of([&] { load_models(kGolden / "models", PhysicalSidecar{}); }) == ErrorKind::UnknownObject);
}

TEST_CASE("trivial symmetry defaults") {
  TempDir dir;
  write_file(dir / "models_info.json", R"({"4": {"diameter": 2.0}})");
  write_file(dir / "obj_000004.ply",
             "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n");
  const auto m = load_models(dir.path(), default_sidecar()).at(4);
  CHECK(m.symmetry.trivial());
  CHECK(m.symmetry.discrete.size() == 1);

  write_file(dir / "models_info.json",
             R"({"4": {"diameter": 2.0, "symmetries_continuous": [{"axis": [0, 0, 2], "offset": [0, 0, 0]}]}})");
  CHECK(kind_of([&] { load_models(dir.path(), default_sidecar()); }) == ErrorKind::ParseError);
  write_file(dir / "models_info.json",
             R"({"4": {"diameter": 2.0, "symmetries_discrete": [[1, 0, 0, 0, 0, 1, 0]]}})");
  CHECK(kind_of([&] { load_models(dir.path(), default_sidecar()); }) == ErrorKind::ParseError);
}

TEST_CASE("physical sidecar") {
  TempDir dir;
  write_file(dir / "p.json", R"({"_note": "x", "3": {"mass_kg": 0.4, "friction": 0.7}, "default": {"mass_kg": 1, "friction": 0.2}})");
  const auto s = load_physical_sidecar(dir / "p.json");
  CHECK(s.lookup(3).mass_kg == 0.4);
  CHECK(s.lookup(99).friction == 0.2);
  write_file(dir / "bad.json", R"({"3": {"mass_kg": -1, "friction": 0.7}})");
  CHECK(kind_of([&] { load_physical_sidecar(dir / "bad.json"); }) == ErrorKind::ParseError);
}

TEST_CASE("estimate CSV golden round trip") {
  const auto text = read_file(kGolden / "estimates.csv");
  const auto file = load_estimates(kGolden / "estimates.csv");
  REQUIRE(file.records.size() == 3);
  CHECK(file.rejected.empty());
  const auto& r0 = file.records[0];
  CHECK(r0.scene_id == 2);
  CHECK(r0.image_id == 3);
  CHECK(r0.object_id == 1);
  CHECK(r0.score == 0.9);
  CHECK(r0.pose.rotation() == Mat3::Identity());
  CHECK(r0.pose.translation() == Vec3(10, 20, 30));
  CHECK(r0.inference_time == 0.1);
  CHECK(r0.row == 2);
  CHECK(file.records[1].score == 0.25);
  CHECK(file.records[2].pose.translation() == Vec3(0.001, -3.5e-05, 1000));
  CHECK(file.records[2].row == 4);

  std::ostringstream out;
  write_estimates(out, file.records);
  CHECK(out.str() == text);

  std::istringstream again(out.str());
  const auto reloaded = parse_estimates(again, "memory");
  REQUIRE(reloaded.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(reloaded.records[i].pose.rotation() == file.records[i].pose.rotation());
    CHECK(reloaded.records[i].pose.translation() == file.records[i].pose.translation());
  }
}

TEST_CASE("estimate CSV random round trip") {
  testing_support::Random rng(21);
  std::vector<EstimateRecord> recs;
  for (int i = 0; i < 100; ++i) {
    EstimateRecord e;
    e.scene_id = rng.integer(0, 60);
    e.image_id = rng.integer(0, 2000);
    e.object_id = rng.integer(1, 21);
    e.score = rng.uniform(0, 1);
    e.pose = rng.transform(1000);
    e.inference_time = rng.uniform(0, 3);
    recs.push_back(e);
  }
  std::stringstream s;
  write_estimates(s, recs);
  const auto back = parse_estimates(s, "memory");
  REQUIRE(back.records.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back.records[i].scene_id == recs[i].scene_id);
    CHECK(back.records[i].image_id == recs[i].image_id);
    CHECK(back.records[i].object_id == recs[i].object_id);
    CHECK(back.records[i].score == recs[i].score);
    CHECK(back.records[i].inference_time == recs[i].inference_time);
    CHECK((back.records[i].pose.rotation() - recs[i].pose.rotation()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.records[i].pose.translation() - recs[i].pose.translation()).cwiseAbs().maxCoeff() <= 1e-12 * 1000);
  }
}

TEST_CASE("estimate CSV errors") {
  const auto bad = kGolden / "malformed";
  CHECK(kind_of([&] { load_estimates(bad / "r_arity.csv"); }) == ErrorKind::ParseError);
  CHECK(what_of([&] { load_estimates(bad / "r_arity.csv"); }).find("row 3") != std::string::npos);
  CHECK(kind_of([&] { load_estimates(bad / "bad_header.csv"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { load_estimates(bad / "bad_number.csv"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { load_estimates(bad / "header_only.csv"); }) == ErrorKind::EmptyFile);
  CHECK(kind_of([&] { load_estimates(bad / "empty.csv"); }) == ErrorKind::EmptyFile);

  const auto drift = load_estimates(bad / "drift.csv");
  REQUIRE(drift.records.size() == 1);
  CHECK(orthonormality_drift(drift.records[0].pose.rotation()) < 1e-12);
  REQUIRE(drift.rejected.size() == 1);
  CHECK(drift.rejected[0].row == 3);

  std::istringstream one("scene_id,im_id,obj_id,score,R,t,time\n2,3,1,0.9,1 0 0 0 1 0 0 0 1,10 20 30,0.1\n");
  const auto rec = parse_estimates(one, "inline").records.at(0);
  CHECK(rec.pose.rotation() == Mat3::Identity());
  CHECK(rec.pose.translation() == Vec3(10, 20, 30));
}

namespace {

GroundTruthRecord gt_at(int image, int object, int instance, double vis, Vec3 t = Vec3(0, 0, 500)) {
  GroundTruthRecord g;
  g.scene_id = 1;
  g.image_id = image;
  g.object_id = object;
  g.instance = instance;
  g.pose = RigidTransform::from_translation(t);
  g.visibility = vis;
  return g;
}

EstimateRecord est_at(int image, int object, double score, std::size_t row, Vec3 t = Vec3(0, 0, 500)) {
  EstimateRecord e;
  e.scene_id = 1;
  e.image_id = image;
  e.object_id = object;
  e.score = score;
  e.pose = RigidTransform::from_translation(t);
  e.row = row;
  return e;
}

}  // namespace

TEST_CASE("matching") {
  SUBCASE("visibility filter") {
    const auto m = match_records({est_at(0, 1, 0.9, 2)}, {gt_at(0, 1, 0, 0.4)}, 0.5);
    CHECK(m.pairs.empty());
    CHECK(m.excluded_ground_truth.size() == 1);
    CHECK(m.excluded_estimates.size() == 1);
    CHECK(m.spurious_estimates.empty());
    CHECK(m.unmatched_ground_truth.empty());
  }
  SUBCASE("spurious estimate") {
    const auto m = match_records({est_at(5, 1, 0.9, 2)}, {gt_at(0, 1, 0, 0.9)}, 0.5);
    CHECK(m.pairs.empty());
    CHECK(m.spurious_estimates.size() == 1);
    CHECK(m.unmatched_ground_truth.size() == 1);
  }
  SUBCASE("higher score wins") {
    const auto m = match_records({est_at(0, 1, 0.5, 2), est_at(0, 1, 0.9, 3)}, {gt_at(0, 1, 0, 0.9)}, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].estimate.score == 0.9);
    CHECK(m.dropped_duplicates.size() == 1);
  }
  SUBCASE("score tie") {
    const std::vector<EstimateRecord> e{est_at(0, 1, 0.7, 2), est_at(0, 1, 0.7, 3)};
    const auto m = match_records(e, {gt_at(0, 1, 0, 0.9)}, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].estimate.row == 2);
    CHECK(kind_of([&] { match_records(e, {gt_at(0, 1, 0, 0.9)}, 0.5, DuplicatePolicy::strict); }) ==
          ErrorKind::DuplicateKey);
  }
  SUBCASE("multiple instances pair by nearest translation") {
    const std::vector<GroundTruthRecord> g{gt_at(0, 1, 0, 0.9, Vec3(0, 0, 500)), gt_at(0, 1, 1, 0.9, Vec3(200, 0, 500))};
    const auto m = match_records({est_at(0, 1, 0.9, 2, Vec3(190, 0, 500)), est_at(0, 1, 0.8, 3, Vec3(5, 0, 500))}, g, 0.5);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0].ground_truth.instance == 0);
    CHECK(m.pairs[0].estimate.row == 3);
    CHECK(m.pairs[1].estimate.row == 2);
  }
}

TEST_CASE("matching bookkeeping properties") {
  testing_support::Random rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GroundTruthRecord> gts;
    std::vector<EstimateRecord> ests;
    std::size_t row = 2;
    for (int im = 0; im < 6; ++im)
      for (int obj = 1; obj <= 3; ++obj) {
        const int n = rng.integer(0, 2);
        for (int k = 0; k < n; ++k) gts.push_back(gt_at(im, obj, static_cast<int>(gts.size()), rng.uniform(0, 1), rng.in_box(300)));
        const int ne = rng.integer(0, 3);
        for (int k = 0; k < ne; ++k) ests.push_back(est_at(im, obj, std::round(rng.uniform(0, 4)) / 4, row++, rng.in_box(300)));
      }
    const double vmin = rng.uniform(0, 1);
    const auto m = match_records(ests, gts, vmin);
    std::size_t visible = 0;
    for (const auto& g : gts) visible += g.visibility >= vmin ? 1 : 0;
    CHECK(m.pairs.size() + m.unmatched_ground_truth.size() == visible);
    for (const auto& p : m.pairs) CHECK(p.ground_truth.visibility >= vmin);
    CHECK(m.pairs.size() + m.spurious_estimates.size() + m.excluded_estimates.size() + m.dropped_duplicates.size() ==
          ests.size());
  }
}

TEST_CASE("subsampling and diameter") {
  std::vector<Vec3> many(25000, Vec3::Zero());
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = Vec3(static_cast<double>(i), 0, 0);
  const auto sub = subsample_vertices(many);
  CHECK(sub.size() <= kMetricVertexCap);
  CHECK(sub.front() == many.front());
  CHECK(subsample_vertices(many) == sub);
  CHECK(max_pairwise_distance(many) == doctest::Approx(24999));
}
