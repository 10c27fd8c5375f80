#pragma once

#include "poseval/analysis.hpp"
#include "poseval/bop_io.hpp"
#include "poseval/deviation.hpp"
#include "poseval/grasp_trial.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace poseval {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct ResultFile {
  std::string name;
  std::filesystem::path path;
  std::vector<int> objects;  // empty = every evaluated object
};

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path models_dir;  // default <dataset_root>/models
  std::filesystem::path scenes_dir;  // default <dataset_root>/test
  std::vector<ResultFile> result_files;
  std::vector<int> objects;  // empty = every object with ground truth
  double visibility_min = 0.5;
  std::filesystem::path gripper_config;
  std::filesystem::path grasp_catalog;
  std::filesystem::path physical_sidecar;
  std::string outcome_model = "surrogate";  // or exec:<cmd> / tcp:<host>:<port>
  int grasp_index = 0;
  double tolerance_mm = 50;
  double hold_s = 15;
  std::filesystem::path output_dir;
  std::vector<GripperKind> grippers{GripperKind::parallel, GripperKind::underactuated};
  bool include_mspd_auc = false;
  AucNormalization auc_normalization = AucNormalization::raw;
  DuplicatePolicy duplicate_policy = DuplicatePolicy::highest_score;
  unsigned threads = 0;  // 0 = hardware concurrency
  bool use_cache = true;

  // Throws ConfigError naming the offending field.
  void validate(bool need_results) const;
  std::string canonical_json() const;
};

// Relative paths are resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::string& source = "config");

std::unique_ptr<OutcomeModel> make_outcome_model(const std::string& spec);

struct EvaluateReport {
  std::size_t pairs = 0;
  std::size_t trials = 0;
  std::size_t indeterminate = 0;
  std::size_t excluded = 0;
  std::size_t cache_hits = 0;
};

EvaluateReport run_evaluate(const RunConfig& config);

struct CatalogCheck {
  int object_id = 0;
  GripperKind gripper = GripperKind::parallel;
  int grasp_index = 0;        // -1 for not-applicable rows
  std::string status;         // pass | fail | not-applicable
  std::string detail;
};

struct CatalogReport {
  std::vector<CatalogCheck> checks;
  bool ok() const;
  std::string text() const;
};

// Zero deviation must succeed and every gross translation must fail.
CatalogReport validate_catalog(const GraspCatalog& catalog, const std::map<int, ObjectModel>& models,
                               const std::map<GripperKind, GripperModel>& grippers,
                               const SuccessCriterion& criterion = {});
CatalogReport run_validate_catalog(const RunConfig& config);

struct InspectQuery {
  std::string estimator;
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  int instance = -1;  // -1 = the first matched instance
};

std::string run_inspect(const RunConfig& config, const InspectQuery& query);

}  // namespace poseval
