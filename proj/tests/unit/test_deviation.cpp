#include "poseval/deviation.hpp"
#include "poseval/error.hpp"

#include "doctest.h"
#include "support/test_support.hpp"

#include <fstream>
#include <optional>

using namespace poseval;
using testing_support::Random;
using testing_support::to_m4;

namespace {

double max_abs(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

ReferenceGrasp sample_grasp(int object_id, GripperKind kind, int index) {
  ReferenceGrasp g;
  g.gripper = kind;
  g.object_id = object_id;
  g.grasp_index = index;
  g.hand_pose_ref = RigidTransform(rot_x(180), Vec3(0, 0, 120));
  g.approach_offset = Vec3(0, 0, -60);
  g.lift_height = 100;
  g.target_hand_object_distance = 70;
  return g;
}

}  // namespace

TEST_CASE("zero deviation keeps the reference plan") {
  Random rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto gt = rng.transform(800);
    const auto sim = rng.transform(200);
    auto ref = sample_grasp(1, GripperKind::parallel, 0);
    ref.hand_pose_ref = rng.transform(300);
    const auto chain = transfer_deviation(gt, gt, sim, ref);
    CHECK(max_abs(chain.delta_world, RigidTransform::identity()) < 1e-12);
    CHECK(max_abs(chain.delta_sim, RigidTransform::identity()) < 1e-12);
    CHECK(max_abs(chain.plan, ref.hand_pose_ref) < 1e-9);
  }
}

TEST_CASE("translation along the object axis moves the plan in the simulator") {
  // gt rotates the object 90 degrees about the camera z axis.
  const RigidTransform gt(rot_z(90), Vec3(0, 0, 600));
  const RigidTransform shift_obj_x = RigidTransform::from_translation(Vec3(5, 0, 0));
  const RigidTransform est = gt * shift_obj_x;  // 5 mm along the object's own x
  const RigidTransform sim = RigidTransform::from_translation(Vec3(0, 0, 25));
  auto ref = sample_grasp(1, GripperKind::parallel, 0);
  const auto chain = transfer_deviation(est, gt, sim, ref);
  CHECK(chain.delta_world.translation().isApprox(Vec3(0, 5, 0), 1e-12));
  CHECK(chain.delta_object.translation().isApprox(Vec3(5, 0, 0), 1e-12));
  CHECK(chain.delta_sim.translation().isApprox(Vec3(5, 0, 0), 1e-12));
  CHECK((chain.plan.translation() - ref.hand_pose_ref.translation()).isApprox(Vec3(5, 0, 0), 1e-12));
}

TEST_CASE("deviation transfer matches the 4x4 oracle") {
  Random rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto gt = rng.transform(900), est = rng.transform(900), sim = rng.transform(100);
    auto ref = sample_grasp(2, GripperKind::underactuated, 1);
    ref.hand_pose_ref = rng.transform(300);
    const auto plan = transfer_deviation(est, gt, sim, ref).plan;
    const oracle::M4 expect = oracle::plan_from(to_m4(est), to_m4(gt), to_m4(sim), to_m4(ref.hand_pose_ref));
    CHECK((plan.matrix() - expect).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("deviation is a property of the estimate relative to the object") {
  Random rng(8);
  for (int i = 0; i < 200; ++i) {
    // A rigid change of camera moves gt and est together.
    const auto camera = rng.transform(500);
    const auto gt = rng.transform(800), est = rng.transform(800), sim = rng.transform(100);
    const auto d1 = deviation_to_sim(deviation_in_world(est, gt), gt, sim);
    const auto d2 = deviation_to_sim(deviation_in_world(camera * est, camera * gt), camera * gt, sim);
    CHECK(max_abs(d1, d2) < 1e-8);

    // Re-placing the object in the simulator maps the plan with it.
    const auto move = rng.transform(100);
    auto ref = sample_grasp(1, GripperKind::parallel, 0);
    ref.hand_pose_ref = rng.transform(200);
    auto moved_ref = ref;
    moved_ref.hand_pose_ref = move * ref.hand_pose_ref;
    const auto p1 = transfer_deviation(est, gt, sim, ref).plan;
    const auto p2 = transfer_deviation(est, gt, move * sim, moved_ref).plan;
    CHECK(max_abs(move * p1, p2) < 1e-8);

    // Object-frame deviation reproduces the estimate.
    const auto dobj = deviation_in_object(deviation_in_world(est, gt), gt);
    CHECK(max_abs(gt * dobj, est) < 1e-8);
  }
}

TEST_CASE("rest pose and support check") {
  const std::vector<Vec3> v{{-10, 4, 3}, {30, -6, 9}, {0, 0, 23}};
  const auto pose = default_rest_pose(v);
  CHECK(pose.rotation().isApprox(Mat3::Identity()));
  CHECK(pose.translation().isApprox(Vec3(-10, 1, -3)));
  CHECK_NOTHROW(check_rests_on_support(pose, v));
  CHECK_THROWS_AS(check_rests_on_support(RigidTransform::from_translation(Vec3(0, 0, -5)), v), Error);
  CHECK_THROWS_AS(default_rest_pose(std::vector<Vec3>{}), Error);
}

TEST_CASE("grasp catalog") {
  GraspCatalog catalog;
  catalog.add(sample_grasp(1, GripperKind::parallel, 0));
  catalog.add(sample_grasp(1, GripperKind::parallel, 1));
  catalog.add(sample_grasp(1, GripperKind::underactuated, 0));
  catalog.set_rest_pose(1, RigidTransform(rot_z(30), Vec3(1, 2, 15)));

  try {
    catalog.add(sample_grasp(1, GripperKind::parallel, 1));
    FAIL("duplicate accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DuplicateKey);
  }
  auto bad = sample_grasp(2, GripperKind::parallel, 0);
  bad.lift_height = 0;
  CHECK_THROWS_AS(catalog.add(bad), Error);

  CHECK(catalog.find(1, GripperKind::parallel, 1) != nullptr);
  CHECK(catalog.find(1, GripperKind::underactuated, 1) == nullptr);
  CHECK(catalog.entries_for(1, GripperKind::parallel).size() == 2);
  CHECK(catalog.entries_for(9, GripperKind::parallel).empty());

  const std::vector<Vec3> v{{-1, -1, -1}, {1, 1, 1}};
  CHECK(catalog.object_pose_sim(1, v).translation().isApprox(Vec3(1, 2, 15)));
  CHECK(catalog.object_pose_sim(2, v).translation().isApprox(Vec3(0, 0, 1)));

  testing_support::TempDir tmp;
  const auto path = tmp.path() / "catalog.json";
  const std::string text = grasp_catalog_json(catalog);
  std::ofstream(path) << text;
  const auto loaded = load_grasp_catalog(path);
  CHECK(grasp_catalog_json(loaded) == text);
  REQUIRE(loaded.grasps().size() == 3);
  CHECK(max_abs(loaded.grasps()[0].hand_pose_ref, catalog.grasps()[0].hand_pose_ref) < 1e-12);
  CHECK(loaded.rest_pose(1).has_value());
}

TEST_CASE("catalog parse errors") {
  testing_support::TempDir tmp;
  auto kind_of = [&](const std::string& body) -> std::optional<ErrorKind> {
    const auto path = tmp.path() / "c.json";
    std::ofstream(path) << body;
    try {
      load_grasp_catalog(path);
    } catch (const Error& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  const std::string pose = R"({"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,100]})";
  const std::string entry = R"({"object_id":1,"gripper":"parallel","grasp_index":0,"hand_pose_ref":)" + pose +
                            R"(,"approach_offset":[0,0,-50],"lift_height":100,"target_hand_object_distance":60})";
  CHECK(kind_of("{not json") == ErrorKind::ParseError);
  CHECK(kind_of(R"({"items":[]})") == ErrorKind::ParseError);
  CHECK(kind_of(R"({"grasps":[)" + entry + "," + entry + "]}") == ErrorKind::DuplicateKey);
  auto replaced = entry;
  replaced.replace(replaced.find("parallel"), 8, "suction");
  CHECK(kind_of(R"({"grasps":[)" + replaced + "]}") == ErrorKind::ParseError);
  std::string skew = entry;
  skew.replace(skew.find("[1,0,0"), 6, "[2,0,0");
  CHECK(kind_of(R"({"grasps":[)" + skew + "]}") == ErrorKind::ParseError);
}
