#include "poseval/deviation.hpp"
#include "poseval/text_format.hpp"

#include "doctest.h"
#include "support/test_support.hpp"

#include <cstdlib>

#include <sys/wait.h>

using namespace poseval;
using testing_support::FixtureImage;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun run_cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli_output.txt";
  const std::string cmd = std::string(POSEVAL_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  return r;
}

std::vector<FixtureImage> images() {
  const RigidTransform gt(rot_x(180), Vec3(0, 0, 650));
  return {{1, gt, 1.0, RigidTransform::from_translation(Vec3(2, 1, 3)) * gt}, {2, gt, 0.9, gt}};
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("exit code 0 for a good run") {
  TempDir tmp;
  const auto ds = testing_support::write_fixture_dataset(tmp.path(), images());
  const auto run = run_cli("evaluate " + quoted(ds.config), tmp.path());
  CHECK(run.code == 0);
  CHECK(run.output.find("pairs 2") != std::string::npos);
  CHECK(fs::exists(ds.output / "summary.csv"));

  const auto check = run_cli("validate-catalog " + quoted(ds.config), tmp.path());
  CHECK(check.code == 0);
  CHECK(check.output.find("catalog validation passed") != std::string::npos);

  const auto inspect = run_cli("inspect " + quoted(ds.config) + " --estimator est --scene 1 --image 1 --obj 1", tmp.path());
  CHECK(inspect.code == 0);
  CHECK(inspect.output.find("perturbed plan") != std::string::npos);

  const auto moved = run_cli("evaluate " + quoted(ds.config) + " --output-dir " + quoted(tmp.path() / "elsewhere") +
                                 " --gripper parallel --no-cache",
                             tmp.path());
  CHECK(moved.code == 0);
  CHECK(fs::exists(tmp.path() / "elsewhere" / "summary.csv"));
  CHECK(read_file(tmp.path() / "elsewhere" / "summary.csv").find("underactuated") == std::string::npos);
}

TEST_CASE("exit code 1 for configuration errors") {
  TempDir tmp;
  const auto ds = testing_support::write_fixture_dataset(tmp.path(), images(), ",\n  \"colour\": \"red\"");
  CHECK(run_cli("evaluate " + quoted(ds.config), tmp.path()).code == 1);
  CHECK(run_cli("evaluate " + quoted(tmp.path() / "missing.json"), tmp.path()).code == 1);
  CHECK(run_cli("frobnicate", tmp.path()).code == 1);
  CHECK(run_cli("evaluate", tmp.path()).code == 1);
}

TEST_CASE("exit code 2 for malformed inputs") {
  TempDir tmp;
  const auto ds = testing_support::write_fixture_dataset(tmp.path(), images());
  write_file(ds.root / "test" / "000001" / "scene_gt.json", "{\"1\": [{\"cam_R_m2c\": [1, 0]");
  const auto run = run_cli("evaluate " + quoted(ds.config), tmp.path());
  CHECK(run.code == 2);
  CHECK(run.output.find("scene_gt.json") != std::string::npos);
}

TEST_CASE("exit code 3 for a failing catalog") {
  TempDir tmp;
  const auto ds = testing_support::write_fixture_dataset(tmp.path(), images());
  auto catalog = load_grasp_catalog(ds.root / "grasp_catalog.json");
  GraspCatalog broken;
  broken.set_rest_pose(1, *catalog.rest_pose(1));
  for (auto g : catalog.grasps()) {
    g.target_hand_object_distance += 500;
    broken.add(g);
  }
  write_file(ds.root / "grasp_catalog.json", grasp_catalog_json(broken));
  const auto run = run_cli("validate-catalog " + quoted(ds.config), tmp.path());
  CHECK(run.code == 3);
  CHECK(run.output.find("FAILED") != std::string::npos);
}

TEST_CASE("exit code 4 when the outcome model drops trials") {
  TempDir tmp;
  const std::string endpoint = std::string("exec:") + POSEVAL_STUB_ADAPTER + " exit_after_one";
  const auto ds = testing_support::write_fixture_dataset(tmp.path(), images(), ",\n  \"outcome_model\": \"" + endpoint + "\"");
  const auto run = run_cli("evaluate " + quoted(ds.config) + " --threads 1", tmp.path());
  CHECK(run.code == 4);
  CHECK(run.output.find("indeterminate") != std::string::npos);
  // Outputs are still written, with the affected trials marked.
  CHECK(read_file(ds.output / "trials.csv").find("indeterminate") != std::string::npos);
}
