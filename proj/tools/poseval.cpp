// Command-line driver: evaluate, validate-catalog, inspect.

#include "poseval/error.hpp"
#include "poseval/log.hpp"
#include "poseval/pipeline.hpp"
#include "poseval/text_format.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kParse = 2, kCatalog = 3, kAdapter = 4 };

int exit_code_for(poseval::ErrorKind kind) {
  using poseval::ErrorKind;
  switch (kind) {
    case ErrorKind::ConfigError: return kConfig;
    case ErrorKind::OutcomeModelUnavailable:
    case ErrorKind::ProtocolError: return kAdapter;
    default: return kParse;
  }
}

struct Overrides {
  std::string dataset_root;
  std::string output_dir;
  std::string outcome_model;
  std::vector<std::string> grippers;
  std::vector<int> objects;
  double visibility_min = -1;
  double tolerance_mm = -1;
  double hold_s = -1;
  int grasp_index = -1;
  unsigned threads = 0;
  bool no_cache = false;
  bool mspd_auc = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--dataset-root", o.dataset_root, "Override dataset_root (models/ and test/ follow it)");
  cmd->add_option("--output-dir", o.output_dir, "Override output_dir");
  cmd->add_option("--outcome-model", o.outcome_model, "surrogate | exec:<cmd> | tcp:<host>:<port>");
  cmd->add_option("--gripper", o.grippers, "Gripper to run (repeatable)");
  cmd->add_option("--object", o.objects, "Object id to evaluate (repeatable)");
  cmd->add_option("--visibility-min", o.visibility_min, "Minimum visible fraction of ground truth");
  cmd->add_option("--tolerance-mm", o.tolerance_mm, "Success tolerance on the hand-object distance");
  cmd->add_option("--hold-s", o.hold_s, "Hold period passed to external simulators");
  cmd->add_option("--grasp-index", o.grasp_index, "Reference grasp index");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  cmd->add_flag("--no-cache", o.no_cache, "Ignore and do not write stage caches");
  cmd->add_flag("--mspd-auc", o.mspd_auc, "Also tabulate the MSPD area under the failure curve");
}

void apply(const Overrides& o, poseval::RunConfig& c) {
  if (!o.dataset_root.empty()) {
    c.dataset_root = o.dataset_root;
    c.models_dir = c.dataset_root / "models";
    c.scenes_dir = c.dataset_root / "test";
  }
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (!o.outcome_model.empty()) c.outcome_model = o.outcome_model;
  if (!o.grippers.empty()) {
    c.grippers.clear();
    for (const auto& g : o.grippers) {
      const auto kind = poseval::parse_gripper_kind(g);
      if (!kind) throw poseval::Error(poseval::ErrorKind::ConfigError, "config field 'grippers': unknown gripper '" + g + "'");
      c.grippers.push_back(*kind);
    }
  }
  if (!o.objects.empty()) c.objects = o.objects;
  if (o.visibility_min >= 0) c.visibility_min = o.visibility_min;
  if (o.tolerance_mm >= 0) c.tolerance_mm = o.tolerance_mm;
  if (o.hold_s >= 0) c.hold_s = o.hold_s;
  if (o.grasp_index >= 0) c.grasp_index = o.grasp_index;
  if (o.threads) c.threads = o.threads;
  if (o.no_cache) c.use_cache = false;
  if (o.mspd_auc) c.include_mspd_auc = true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-estimation evaluation with grasp-success trials"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(poseval::kToolVersion));

  std::string config_path;
  Overrides overrides;

  auto* evaluate = app.add_subcommand("evaluate", "Run metrics, grasp trials and aggregation");
  evaluate->add_option("config", config_path, "Run configuration (JSON)")->required();
  add_overrides(evaluate, overrides);

  auto* validate = app.add_subcommand("validate-catalog", "Check every reference grasp under zero and gross deviation");
  validate->add_option("config", config_path, "Run configuration (JSON)")->required();
  add_overrides(validate, overrides);

  poseval::InspectQuery query;
  auto* inspect = app.add_subcommand("inspect", "Print the deviation transfer and metrics of one pair");
  inspect->add_option("config", config_path, "Run configuration (JSON)")->required();
  inspect->add_option("--estimator", query.estimator, "Result file name from the config")->required();
  inspect->add_option("--scene", query.scene_id, "Scene id")->required();
  inspect->add_option("--image", query.image_id, "Image id")->required();
  inspect->add_option("--obj", query.object_id, "Object id")->required();
  inspect->add_option("--instance", query.instance, "Ground-truth instance (default: first matched)");
  add_overrides(inspect, overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    poseval::RunConfig config = poseval::load_run_config(config_path);
    apply(overrides, config);

    if (evaluate->parsed()) {
      const auto report = poseval::run_evaluate(config);
      std::cout << "pairs " << report.pairs << ", trials " << report.trials << ", excluded estimates "
                << report.excluded << ", cache hits " << report.cache_hits << "\n"
                << "outputs written to " << config.output_dir.string() << "\n";
      if (report.indeterminate > 0) {
        poseval::log::error(std::to_string(report.indeterminate) + " trials are indeterminate (outcome model unreachable)");
        return kAdapter;
      }
      return kOk;
    }
    if (validate->parsed()) {
      const auto report = poseval::run_validate_catalog(config);
      std::cout << report.text();
      if (!report.ok()) {
        std::cout << "catalog validation FAILED\n";
        return kCatalog;
      }
      std::cout << "catalog validation passed\n";
      return kOk;
    }
    if (inspect->parsed()) {
      std::cout << poseval::run_inspect(config, query);
      return kOk;
    }
  } catch (const poseval::Error& e) {
    poseval::log::error(e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    poseval::log::error(std::string("unexpected failure: ") + e.what());
    return kParse;
  }
  return kOk;
}
