#include "poseval/pipeline.hpp"

#include "poseval/adapter.hpp"
#include "poseval/error.hpp"
#include "poseval/log.hpp"
#include "poseval/metrics.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace poseval {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void config_fail(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::ConfigError, "config field '" + field + "': " + what);
}

// Runs f(i) for i < n on a small worker pool. The exception of the lowest
// failing index is rethrown so failures are reported deterministically.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
        }
      }
    });
  }
  pool.clear();
  if (err) std::rethrow_exception(err);
}

std::string csv_double(double v) { return format_double(v); }

std::string safe_name(const std::string& s) {
  std::string out;
  for (const char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string mesh_name(int object_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "obj_%06d.ply", object_id);
  return buf;
}

std::vector<fs::path> scene_dirs(const fs::path& scenes_dir) {
  std::vector<std::pair<long long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(scenes_dir)) {
    if (!entry.is_directory()) continue;
    if (const auto id = parse_int(entry.path().filename().string())) found.emplace_back(*id, entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [id, p] : found) out.push_back(p);
  return out;
}

struct Dataset {
  std::vector<GroundTruthRecord> ground_truth;
  std::map<std::pair<int, int>, CameraIntrinsics> cameras;
  std::vector<int> objects;
  std::map<int, ObjectModel> models;
  std::map<int, RigidTransform> object_pose_sim;
  PhysicalSidecar sidecar;
  std::string ingest_hash;
};

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  ContentHash hash;
  hash.add(kToolVersion);
  const auto scenes = scene_dirs(cfg.scenes_dir);
  if (scenes.empty()) config_fail("scenes_dir", "no numeric scene directories in " + cfg.scenes_dir.string());
  for (const auto& scene : scenes) {
    auto gt = load_scene_ground_truth(scene);
    const auto cams = load_scene_cameras(scene);
    const int scene_id = static_cast<int>(*parse_int(scene.filename().string()));
    for (const auto& [image, k] : cams) d.cameras.emplace(std::pair(scene_id, image), k);
    d.ground_truth.insert(d.ground_truth.end(), gt.begin(), gt.end());
    for (const char* f : {"scene_gt.json", "scene_gt_info.json", "scene_camera.json"}) hash.add_file(scene / f);
  }
  if (cfg.objects.empty()) {
    std::set<int> ids;
    for (const auto& g : d.ground_truth) ids.insert(g.object_id);
    d.objects.assign(ids.begin(), ids.end());
  } else {
    d.objects = cfg.objects;
    std::sort(d.objects.begin(), d.objects.end());
    d.objects.erase(std::unique(d.objects.begin(), d.objects.end()), d.objects.end());
  }
  std::erase_if(d.ground_truth, [&](const GroundTruthRecord& g) {
    return !std::binary_search(d.objects.begin(), d.objects.end(), g.object_id);
  });
  d.sidecar = load_physical_sidecar(cfg.physical_sidecar);
  d.models = load_models(cfg.models_dir, d.sidecar, d.objects);
  hash.add_file(cfg.models_dir / "models_info.json");
  for (const int id : d.objects) {
    hash.add(std::to_string(id));
    hash.add_file(cfg.models_dir / mesh_name(id));
  }
  hash.add(format_double(cfg.visibility_min));
  hash.add(cfg.duplicate_policy == DuplicatePolicy::strict ? "strict" : "highest_score");
  d.ingest_hash = hash.hex();
  return d;
}

std::string pair_key_text(const GroundTruthRecord& g) {
  return std::to_string(g.scene_id) + "," + std::to_string(g.image_id) + "," + std::to_string(g.object_id) + "," +
         std::to_string(g.instance);
}

std::string metrics_row(const MetricRecord& m) {
  return csv_double(m.rotation_error) + "," + csv_double(m.translation_error) + "," +
         csv_double(m.translation_error_along_view) + "," + csv_double(m.add_s) + "," + csv_double(m.mssd) + "," +
         csv_double(m.mspd) + "," + (m.mspd_behind_camera ? "1" : "0");
}

std::optional<MetricRecord> parse_metrics_fields(const std::vector<std::string_view>& f, std::size_t at) {
  if (f.size() < at + 7) return std::nullopt;
  MetricRecord m;
  double* slots[] = {&m.rotation_error, &m.translation_error, &m.translation_error_along_view, &m.add_s, &m.mssd,
                     &m.mspd};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto v = parse_double(f[at + i]);
    if (!v) return std::nullopt;
    *slots[i] = *v;
  }
  m.mspd_behind_camera = f[at + 6] == "1";
  return m;
}

// Stage caches: one text file per content hash, one line per record in
// the order the records are produced.
class StageCache {
 public:
  StageCache(fs::path dir, bool enabled) : dir_(std::move(dir)), enabled_(enabled) {}

  std::optional<std::vector<std::string>> load(const std::string& stage, const std::string& key) const {
    if (!enabled_) return std::nullopt;
    const fs::path p = dir_ / (stage + "-" + key + ".txt");
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.empty() || lines.back() != "#end") return std::nullopt;
    lines.pop_back();
    return lines;
  }

  void store(const std::string& stage, const std::string& key, const std::vector<std::string>& lines) const {
    if (!enabled_) return;
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    text += "#end\n";
    write_file(dir_ / (stage + "-" + key + ".txt"), text);
  }

 private:
  fs::path dir_;
  bool enabled_;
};

struct EstimatorRun {
  std::string name;
  std::vector<int> objects;
  MatchResult match;
  std::vector<RejectedEstimate> rejected;
  std::vector<EstimateRecord> out_of_scope;
  std::vector<MetricRecord> metrics;  // parallel to match.pairs
  std::vector<TrialRecord> trials;
};

SuccessCriterion criterion_of(const RunConfig& cfg) { return {cfg.tolerance_mm, cfg.hold_s}; }

std::map<GripperKind, GripperModel> selected_grippers(const RunConfig& cfg) {
  const auto all = load_gripper_config(cfg.gripper_config);
  std::map<GripperKind, GripperModel> out;
  for (const auto g : cfg.grippers) {
    const auto it = all.find(g);
    if (it == all.end()) {
      config_fail("grippers", "'" + std::string(to_string(g)) + "' is not defined in " + cfg.gripper_config.string());
    }
    out.emplace(g, it->second);
  }
  return out;
}

TrialKey trial_key(const std::string& estimator, const GroundTruthRecord& g, GripperKind gripper, int grasp_index) {
  return {estimator, g.scene_id, g.image_id, g.object_id, g.instance, gripper, grasp_index};
}

std::string trial_key_text(const TrialKey& k) {
  return std::to_string(k.scene_id) + "," + std::to_string(k.image_id) + "," + std::to_string(k.object_id) + "," +
         std::to_string(k.instance) + "," + std::string(to_string(k.gripper)) + "," + std::to_string(k.grasp_index);
}

std::string trial_row(const TrialRecord& t) {
  return trial_key_text(t.key) + "," + (t.success ? "1" : "0") + "," + std::string(to_string(t.failure_stage)) + "," +
         csv_double(t.final_distance_mm);
}

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void run_metrics(EstimatorRun& run, const Dataset& data, const std::map<int, MetricEvaluator>& evaluators,
                 const RunConfig& cfg, const StageCache& cache, const std::string& key, EvaluateReport& report) {
  const auto& pairs = run.match.pairs;
  if (const auto lines = cache.load("metrics", key); lines && lines->size() == pairs.size()) {
    std::vector<MetricRecord> cached;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto f = split((*lines)[i], ',');
      const std::string k = pair_key_text(pairs[i].ground_truth);
      if (f.size() != 11) break;
      const std::string lk = std::string(f[0]) + "," + std::string(f[1]) + "," + std::string(f[2]) + "," + std::string(f[3]);
      const auto m = parse_metrics_fields(f, 4);
      if (lk != k || !m) break;
      cached.push_back(*m);
    }
    if (cached.size() == pairs.size()) {
      run.metrics = std::move(cached);
      ++report.cache_hits;
      return;
    }
  }
  run.metrics.assign(pairs.size(), {});
  parallel_for(pairs.size(), cfg.threads, [&](std::size_t i) {
    const auto& p = pairs[i];
    const auto cam = data.cameras.find({p.ground_truth.scene_id, p.ground_truth.image_id});
    if (cam == data.cameras.end()) {
      throw Error(ErrorKind::ParseError, "estimator " + run.name + ": no camera for scene " +
                                             std::to_string(p.ground_truth.scene_id) + " image " +
                                             std::to_string(p.ground_truth.image_id) + " (estimate row " +
                                             std::to_string(p.estimate.row) + ")");
    }
    run.metrics[i] = evaluators.at(p.ground_truth.object_id).evaluate(p.estimate.pose, p.ground_truth.pose, cam->second);
  });
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < pairs.size(); ++i) lines.push_back(pair_key_text(pairs[i].ground_truth) + "," + metrics_row(run.metrics[i]));
  cache.store("metrics", key, lines);
}

void run_trials(EstimatorRun& run, const Dataset& data, const GraspCatalog& catalog,
                const std::map<GripperKind, GripperModel>& grippers, OutcomeModel& outcome, const RunConfig& cfg,
                const StageCache& cache, const std::string& key, EvaluateReport& report) {
  struct Job {
    std::size_t pair;  // index into match.pairs, or npos for missing estimates
    const GroundTruthRecord* gt;
    const ReferenceGrasp* ref;
    GripperKind gripper;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < run.match.pairs.size(); ++i) {
    const auto& gt = run.match.pairs[i].ground_truth;
    for (const auto& [kind, g] : grippers) {
      if (const auto* ref = catalog.find(gt.object_id, kind, cfg.grasp_index)) jobs.push_back({i, &gt, ref, kind});
    }
  }
  for (const auto& gt : run.match.unmatched_ground_truth) {
    for (const auto& [kind, g] : grippers) {
      if (const auto* ref = catalog.find(gt.object_id, kind, cfg.grasp_index)) jobs.push_back({std::string::npos, &gt, ref, kind});
    }
  }
  const auto job_key = [&](const Job& j) { return trial_key(run.name, *j.gt, j.gripper, cfg.grasp_index); };
  std::sort(jobs.begin(), jobs.end(), [&](const Job& a, const Job& b) { return job_key(a) < job_key(b); });

  if (const auto lines = cache.load("trials", key); lines && lines->size() == jobs.size()) {
    std::vector<TrialRecord> cached;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto f = split((*lines)[i], ',');
      TrialRecord t;
      t.key = job_key(jobs[i]);
      if (f.size() != 9 || !(*lines)[i].starts_with(trial_key_text(t.key) + ",")) break;
      const auto stage = parse_failure_stage(f[7]);
      const auto dist = parse_double(f[8]);
      if (!stage || !dist || *stage == FailureStage::indeterminate) break;
      t.success = f[6] == "1";
      t.failure_stage = *stage;
      t.final_distance_mm = *dist;
      if (jobs[i].pair != std::string::npos) t.metrics = run.metrics[jobs[i].pair];
      cached.push_back(t);
    }
    if (cached.size() == jobs.size()) {
      run.trials = std::move(cached);
      ++report.cache_hits;
      return;
    }
  }

  const SuccessCriterion crit = criterion_of(cfg);
  run.trials.assign(jobs.size(), {});
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    const Job& j = jobs[i];
    const TrialKey k = job_key(j);
    if (j.pair == std::string::npos) {
      run.trials[i] = missing_estimate_record(k);
      return;
    }
    const auto& pair = run.match.pairs[j.pair];
    const RigidTransform& sim_pose = data.object_pose_sim.at(pair.ground_truth.object_id);
    const auto chain = transfer_deviation(pair.estimate.pose, pair.ground_truth.pose, sim_pose, *j.ref);
    const TrialSpec spec{&data.models.at(pair.ground_truth.object_id), sim_pose, chain.plan, *j.ref};
    run.trials[i] = run_trial(spec, grippers.at(j.gripper), outcome, k, run.metrics[j.pair], crit);
  });
  const bool any_indeterminate =
      std::any_of(run.trials.begin(), run.trials.end(), [](const TrialRecord& t) { return t.indeterminate(); });
  if (!any_indeterminate) {
    std::vector<std::string> lines;
    for (const auto& t : run.trials) lines.push_back(trial_row(t));
    cache.store("trials", key, lines);
  }
}

void write_outputs(const RunConfig& cfg, const Dataset& data, const std::vector<EstimatorRun>& runs,
                   const std::set<GroupKey>& not_applicable, const std::string& config_hash,
                   const std::string& input_hash) {
  const fs::path out = cfg.output_dir;
  std::map<std::string, std::string> files;  // relative path -> contents

  std::string metrics_csv =
      "estimator,scene_id,im_id,obj_id,instance,est_row,rotation_error_deg,translation_error_mm,"
      "translation_error_along_view_mm,add_s_mm,mssd_mm,mspd_px,mspd_behind_camera\n";
  std::string trials_csv = "estimator,scene_id,im_id,obj_id,instance,gripper,grasp_index,success,failure_stage,final_distance_mm\n";
  std::string unmatched_csv = "estimator,kind,scene_id,im_id,obj_id,instance,est_row,detail\n";
  std::vector<TrialRecord> all_trials;
  std::vector<PairResult> all_pairs;
  std::vector<GroupKey> groups;
  std::map<std::string, std::vector<int>> estimator_objects;
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.match.pairs.size(); ++i) {
      const auto& p = run.match.pairs[i];
      metrics_csv += csv_field(run.name) + "," + pair_key_text(p.ground_truth) + "," + std::to_string(p.estimate.row) +
                     "," + metrics_row(run.metrics[i]) + "\n";
      all_pairs.push_back({run.name, p.ground_truth.scene_id, p.ground_truth.image_id, p.ground_truth.object_id,
                           p.ground_truth.instance, run.metrics[i]});
    }
    for (const auto& t : run.trials) {
      trials_csv += csv_field(run.name) + "," + trial_row(t) + "\n";
      all_trials.push_back(t);
    }
    for (const auto& g : run.match.unmatched_ground_truth) {
      unmatched_csv += csv_field(run.name) + ",missing_estimate," + pair_key_text(g) + ",,\n";
    }
    const auto est_line = [&](const char* kind, const EstimateRecord& e, const std::string& detail) {
      unmatched_csv += csv_field(run.name) + "," + kind + "," + std::to_string(e.scene_id) + "," +
                       std::to_string(e.image_id) + "," + std::to_string(e.object_id) + ",," + std::to_string(e.row) +
                       "," + csv_field(detail) + "\n";
    };
    for (const auto& e : run.match.spurious_estimates) est_line("spurious_estimate", e, "no ground truth");
    for (const auto& e : run.match.dropped_duplicates) est_line("dropped_duplicate", e, "lower score than matched estimate");
    for (const auto& e : run.out_of_scope) est_line("out_of_scope", e, "object not evaluated");
    for (const auto& r : run.rejected) {
      unmatched_csv += csv_field(run.name) + ",rejected_rotation,,,,," + std::to_string(r.row) + "," + csv_field(r.reason) + "\n";
    }
    for (const int obj : run.objects) {
      for (const auto g : cfg.grippers) {
        const GroupKey k{run.name, obj, g};
        if (!not_applicable.contains(k)) groups.push_back(k);
      }
    }
  }

  std::string excluded_csv = "estimator,scene_id,im_id,obj_id,instance,est_row,visibility\n";
  std::map<GroupKey, std::size_t> excluded_counts;
  std::vector<GroundTruthRecord> excluded_gt;
  for (const auto& g : data.ground_truth) {
    if (g.visibility < cfg.visibility_min) excluded_gt.push_back(g);
  }
  for (const auto& g : excluded_gt) excluded_csv += "," + pair_key_text(g) + ",," + csv_double(g.visibility) + "\n";
  for (const auto& run : runs) {
    for (const auto& e : run.match.excluded_estimates) {
      excluded_csv += csv_field(run.name) + "," + std::to_string(e.scene_id) + "," + std::to_string(e.image_id) + "," +
                      std::to_string(e.object_id) + ",," + std::to_string(e.row) + ",\n";
    }
  }
  for (const auto& k : groups) {
    excluded_counts[k] = static_cast<std::size_t>(std::count_if(
        excluded_gt.begin(), excluded_gt.end(), [&](const GroundTruthRecord& g) { return g.object_id == k.object_id; }));
  }

  const SummaryResult summary = summarize(all_trials, groups, excluded_counts);
  std::string summary_csv =
      "estimator,obj_id,gripper,median_rotation_error_deg,median_translation_error_mm,p90_translation_error_mm,"
      "median_add_s_mm,median_mssd_mm,median_mspd_px,success_rate,trial_count,success_count,missing_count,"
      "excluded_count,sentinel_count,indeterminate_count\n";
  ordered_json summary_json;
  summary_json["rows"] = ordered_json::array();
  for (const auto& s : summary.rows) {
    summary_csv += csv_field(s.key.estimator) + "," + std::to_string(s.key.object_id) + "," +
                   std::string(to_string(s.key.gripper)) + "," + csv_double(s.median_rotation_error) + "," +
                   csv_double(s.median_translation_error) + "," + csv_double(s.p90_translation_error) + "," +
                   csv_double(s.median_add_s) + "," + csv_double(s.median_mssd) + "," + csv_double(s.median_mspd) +
                   "," + csv_double(s.success_rate) + "," + std::to_string(s.trial_count) + "," +
                   std::to_string(s.success_count) + "," + std::to_string(s.missing_count) + "," +
                   std::to_string(s.excluded_count) + "," + std::to_string(s.sentinel_count) + "," +
                   std::to_string(s.indeterminate_count) + "\n";
    const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(format_double(v)); };
    summary_json["rows"].push_back(ordered_json{
        {"estimator", s.key.estimator},
        {"obj_id", s.key.object_id},
        {"gripper", std::string(to_string(s.key.gripper))},
        {"median_rotation_error_deg", num(s.median_rotation_error)},
        {"median_translation_error_mm", num(s.median_translation_error)},
        {"p90_translation_error_mm", num(s.p90_translation_error)},
        {"median_add_s_mm", num(s.median_add_s)},
        {"median_mssd_mm", num(s.median_mssd)},
        {"median_mspd_px", num(s.median_mspd)},
        {"success_rate", num(s.success_rate)},
        {"trial_count", s.trial_count},
        {"success_count", s.success_count},
        {"missing_count", s.missing_count},
        {"excluded_count", s.excluded_count},
        {"sentinel_count", s.sentinel_count},
        {"indeterminate_count", s.indeterminate_count},
    });
  }
  summary_json["gaps"] = ordered_json::array();
  std::vector<SummaryGap> gaps = summary.gaps;
  for (const auto& k : not_applicable) gaps.push_back({k, "not applicable: no reference grasp in the catalog"});
  std::sort(gaps.begin(), gaps.end(), [](const SummaryGap& a, const SummaryGap& b) { return a.key < b.key; });
  for (const auto& g : gaps) {
    summary_json["gaps"].push_back(ordered_json{{"estimator", g.key.estimator},
                                                {"obj_id", g.key.object_id},
                                                {"gripper", std::string(to_string(g.key.gripper))},
                                                {"reason", g.reason}});
  }

  std::vector<Metric> auc_metrics(std::begin(kAucMetrics), std::end(kAucMetrics));
  if (cfg.include_mspd_auc) auc_metrics.push_back(Metric::mspd);
  const auto aucs = auc_table(all_trials, groups, auc_metrics, cfg.auc_normalization);
  std::string auc_csv = "estimator,obj_id,gripper,metric,auc,normalization,degenerate_range\n";
  for (const auto& a : aucs) {
    auc_csv += csv_field(a.key.estimator) + "," + std::to_string(a.key.object_id) + "," +
               std::string(to_string(a.key.gripper)) + "," + std::string(to_string(a.metric)) + "," + csv_double(a.auc) +
               "," + std::string(to_string(cfg.auc_normalization)) + "," + (a.degenerate_range ? "1" : "0") + "\n";
  }

  const auto curve_text = [](const FailureCurve& c) {
    std::string s = "value,failure_fraction\n";
    for (const auto& p : c) s += csv_double(p.value) + "," + csv_double(p.failure_fraction) + "\n";
    return s;
  };
  std::vector<Metric> curve_metrics(std::begin(kAllMetrics), std::end(kAllMetrics));
  for (const auto& k : groups) {
    std::vector<TrialRecord> members;
    for (const auto& t : all_trials) {
      if (t.key.estimator == k.estimator && t.key.object_id == k.object_id && t.key.gripper == k.gripper &&
          !t.indeterminate()) {
        members.push_back(t);
      }
    }
    if (members.empty()) continue;
    for (const Metric m : curve_metrics) {
      files["curves/" + safe_name(k.estimator) + "__obj_" + std::to_string(k.object_id) + "__" +
            std::string(to_string(k.gripper)) + "__" + std::string(to_string(m)) + ".csv"] =
          curve_text(failure_cdf(members, m));
    }
  }
  for (const auto g : cfg.grippers) {
    std::vector<TrialRecord> pooled;
    for (const auto& t : all_trials) {
      if (t.key.gripper == g && !t.indeterminate()) pooled.push_back(t);
    }
    if (pooled.empty()) continue;
    for (const Metric m : curve_metrics) {
      files["curves/pooled__" + std::string(to_string(g)) + "__" + std::string(to_string(m)) + ".csv"] =
          curve_text(failure_cdf(pooled, m));
    }
  }

  std::string view_csv = "estimator,obj_id,median_fraction_along_view,pair_count\n";
  for (const auto& v : view_axis_decomposition(all_pairs)) {
    view_csv += csv_field(v.estimator) + "," + (v.object_id == kPooledObject ? std::string("all") : std::to_string(v.object_id)) +
                "," + csv_double(v.median_fraction) + "," + std::to_string(v.count) + "\n";
  }

  files["metrics.csv"] = metrics_csv;
  files["trials.csv"] = trials_csv;
  files["summary.csv"] = summary_csv;
  files["summary.json"] = summary_json.dump(2) + "\n";
  files["auc.csv"] = auc_csv;
  files["view_axis.csv"] = view_csv;
  files["excluded.csv"] = excluded_csv;
  files["unmatched.csv"] = unmatched_csv;

  std::error_code ec;
  fs::remove_all(out / "curves", ec);
  ordered_json manifest{{"tool", "poseval"},
                        {"version", std::string(kToolVersion)},
                        {"config_hash", config_hash},
                        {"input_hash", input_hash},
                        {"created_utc", iso_timestamp()}};
  manifest["files"] = ordered_json::object();
  for (const auto& [rel, text] : files) {
    write_file(out / rel, text);
    manifest["files"][rel] = ContentHash().add(text).hex();
  }
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate(bool need_results) const {
  const auto must_exist = [](const fs::path& p, const char* field) {
    if (p.empty()) config_fail(field, "missing");
    if (!fs::exists(p)) config_fail(field, "path does not exist: " + p.string());
  };
  must_exist(dataset_root, "dataset_root");
  must_exist(models_dir, "models_dir");
  must_exist(gripper_config, "gripper_config");
  must_exist(grasp_catalog, "grasp_catalog");
  must_exist(physical_sidecar, "physical_sidecar");
  if (!(visibility_min >= 0 && visibility_min <= 1)) config_fail("visibility_min", "must lie in [0, 1]");
  if (!(tolerance_mm > 0)) config_fail("tolerance_mm", "must be positive");
  if (!(hold_s >= 0)) config_fail("hold_s", "must be non-negative");
  if (grasp_index < 0) config_fail("grasp_index", "must be non-negative");
  if (grippers.empty()) config_fail("grippers", "at least one gripper is required");
  if (outcome_model != "surrogate" && !outcome_model.starts_with("exec:") && !outcome_model.starts_with("tcp:")) {
    config_fail("outcome_model", "expected 'surrogate', 'exec:<cmd>' or 'tcp:<host>:<port>'");
  }
  if (need_results) {
    must_exist(scenes_dir, "scenes_dir");
    if (output_dir.empty()) config_fail("output_dir", "missing");
    if (result_files.empty()) config_fail("result_files", "at least one result file is required");
    std::set<std::string> names;
    for (const auto& r : result_files) {
      if (r.name.empty()) config_fail("result_files", "entry without a name");
      if (!names.insert(r.name).second) config_fail("result_files", "duplicate estimator name '" + r.name + "'");
      must_exist(r.path, "result_files");
    }
  }
}

std::string RunConfig::canonical_json() const {
  ordered_json j;
  j["dataset_root"] = dataset_root.string();
  j["models_dir"] = models_dir.string();
  j["scenes_dir"] = scenes_dir.string();
  j["result_files"] = ordered_json::array();
  for (const auto& r : result_files) {
    j["result_files"].push_back(ordered_json{{"name", r.name}, {"path", r.path.string()}, {"objects", r.objects}});
  }
  j["objects"] = objects;
  j["visibility_min"] = visibility_min;
  j["gripper_config"] = gripper_config.string();
  j["grasp_catalog"] = grasp_catalog.string();
  j["physical_sidecar"] = physical_sidecar.string();
  j["outcome_model"] = outcome_model;
  j["grasp_index"] = grasp_index;
  j["tolerance_mm"] = tolerance_mm;
  j["hold_s"] = hold_s;
  j["output_dir"] = output_dir.string();
  j["grippers"] = ordered_json::array();
  for (const auto g : grippers) j["grippers"].push_back(std::string(to_string(g)));
  j["include_mspd_auc"] = include_mspd_auc;
  j["auc_normalization"] = std::string(to_string(auc_normalization));
  j["duplicate_policy"] = duplicate_policy == DuplicatePolicy::strict ? "strict" : "highest_score";
  return j.dump();
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, source + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, source + ": expected a JSON object");
  static const std::set<std::string> known{
      "dataset_root", "models_dir", "scenes_dir", "result_files", "objects", "visibility_min", "gripper_config",
      "grasp_catalog", "physical_sidecar", "outcome_model", "grasp_index", "tolerance_mm", "hold_s", "output_dir",
      "grippers", "include_mspd_auc", "auc_normalization", "duplicate_policy", "threads", "use_cache"};
  for (const auto& [key, v] : j.items()) {
    if (!key.starts_with("_") && !known.contains(key)) config_fail(key, "unknown field");
  }
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };
  const auto str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) config_fail(key, "expected a string");
    return j[key].get<std::string>();
  };
  const auto num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_number()) config_fail(key, "expected a number");
    return j[key].get<double>();
  };
  const auto int_list = [&](const json& v, const std::string& field) {
    if (!v.is_array()) config_fail(field, "expected a list of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) config_fail(field, "expected a list of integers");
      out.push_back(e.get<int>());
    }
    return out;
  };

  RunConfig c;
  if (const auto v = str("dataset_root")) c.dataset_root = resolve(*v);
  else config_fail("dataset_root", "missing");
  c.models_dir = str("models_dir") ? resolve(*str("models_dir")) : c.dataset_root / "models";
  c.scenes_dir = str("scenes_dir") ? resolve(*str("scenes_dir")) : c.dataset_root / "test";
  if (j.contains("result_files")) {
    if (!j["result_files"].is_array()) config_fail("result_files", "expected a list");
    for (const auto& r : j["result_files"]) {
      if (!r.is_object() || !r.contains("name") || !r["name"].is_string() || !r.contains("path") ||
          !r["path"].is_string()) {
        config_fail("result_files", "each entry needs string 'name' and 'path'");
      }
      ResultFile rf{r["name"].get<std::string>(), resolve(r["path"].get<std::string>()), {}};
      if (r.contains("objects")) rf.objects = int_list(r["objects"], "result_files.objects");
      c.result_files.push_back(std::move(rf));
    }
  }
  if (j.contains("objects")) c.objects = int_list(j["objects"], "objects");
  if (const auto v = num("visibility_min")) c.visibility_min = *v;
  if (const auto v = str("gripper_config")) c.gripper_config = resolve(*v);
  if (const auto v = str("grasp_catalog")) c.grasp_catalog = resolve(*v);
  if (const auto v = str("physical_sidecar")) c.physical_sidecar = resolve(*v);
  if (const auto v = str("outcome_model")) c.outcome_model = *v;
  if (j.contains("grasp_index")) {
    if (!j["grasp_index"].is_number_integer()) config_fail("grasp_index", "expected an integer");
    c.grasp_index = j["grasp_index"].get<int>();
  }
  if (const auto v = num("tolerance_mm")) c.tolerance_mm = *v;
  if (const auto v = num("hold_s")) c.hold_s = *v;
  if (const auto v = str("output_dir")) c.output_dir = resolve(*v);
  if (j.contains("grippers")) {
    if (!j["grippers"].is_array()) config_fail("grippers", "expected a list of gripper names");
    c.grippers.clear();
    for (const auto& g : j["grippers"]) {
      if (!g.is_string()) config_fail("grippers", "expected a list of gripper names");
      const auto kind = parse_gripper_kind(g.get<std::string>());
      if (!kind) config_fail("grippers", "unknown gripper '" + g.get<std::string>() + "'");
      if (std::find(c.grippers.begin(), c.grippers.end(), *kind) == c.grippers.end()) c.grippers.push_back(*kind);
    }
  }
  if (j.contains("include_mspd_auc")) {
    if (!j["include_mspd_auc"].is_boolean()) config_fail("include_mspd_auc", "expected a boolean");
    c.include_mspd_auc = j["include_mspd_auc"].get<bool>();
  }
  if (const auto v = str("auc_normalization")) {
    if (*v == "raw") c.auc_normalization = AucNormalization::raw;
    else if (*v == "unit_range") c.auc_normalization = AucNormalization::unit_range;
    else config_fail("auc_normalization", "expected 'raw' or 'unit_range'");
  }
  if (const auto v = str("duplicate_policy")) {
    if (*v == "highest_score") c.duplicate_policy = DuplicatePolicy::highest_score;
    else if (*v == "strict") c.duplicate_policy = DuplicatePolicy::strict;
    else config_fail("duplicate_policy", "expected 'highest_score' or 'strict'");
  }
  if (j.contains("threads")) {
    if (!j["threads"].is_number_unsigned()) config_fail("threads", "expected a non-negative integer");
    c.threads = j["threads"].get<unsigned>();
  }
  if (j.contains("use_cache")) {
    if (!j["use_cache"].is_boolean()) config_fail("use_cache", "expected a boolean");
    c.use_cache = j["use_cache"].get<bool>();
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorKind::ConfigError, "cannot read config " + path.string());
  }
  return parse_run_config(text, fs::absolute(path).parent_path(), path.string());
}

std::unique_ptr<OutcomeModel> make_outcome_model(const std::string& spec) {
  if (spec == "surrogate") return std::make_unique<SurrogateOutcomeModel>();
  if (spec.starts_with("exec:") || spec.starts_with("tcp:")) return std::make_unique<ExternalOutcomeModel>(spec);
  config_fail("outcome_model", "unsupported value '" + spec + "'");
}

// ---------------------------------------------------------------- evaluate

EvaluateReport run_evaluate(const RunConfig& cfg) {
  cfg.validate(true);
  EvaluateReport report;
  const auto grippers = selected_grippers(cfg);
  const GraspCatalog catalog = load_grasp_catalog(cfg.grasp_catalog);
  Dataset data = load_dataset(cfg);
  for (const int id : data.objects) {
    const auto& model = data.models.at(id);
    const RigidTransform pose = catalog.object_pose_sim(id, model.vertices);
    check_rests_on_support(pose, model.vertices);
    data.object_pose_sim.emplace(id, pose);
  }
  std::map<int, MetricEvaluator> evaluators;
  for (const auto& [id, model] : data.models) evaluators.emplace(id, MetricEvaluator(model));

  const std::string trial_params = ContentHash()
                                       .add(data.ingest_hash)
                                       .add_file(cfg.physical_sidecar)
                                       .add_file(cfg.grasp_catalog)
                                       .add_file(cfg.gripper_config)
                                       .add(cfg.outcome_model)
                                       .add(std::to_string(cfg.grasp_index))
                                       .add(format_double(cfg.tolerance_mm))
                                       .add(format_double(cfg.hold_s))
                                       .hex();
  std::string gripper_list;
  for (const auto g : cfg.grippers) gripper_list += std::string(to_string(g)) + ";";

  const StageCache cache(cfg.output_dir / ".cache", cfg.use_cache);
  auto outcome = make_outcome_model(cfg.outcome_model);
  ContentHash input_hash;
  input_hash.add(trial_params).add(gripper_list);

  std::vector<EstimatorRun> runs;
  std::set<GroupKey> not_applicable;
  for (const auto& rf : cfg.result_files) {
    EstimatorRun run;
    run.name = rf.name;
    run.objects = data.objects;
    if (!rf.objects.empty()) {
      std::erase_if(run.objects, [&](int id) { return std::find(rf.objects.begin(), rf.objects.end(), id) == rf.objects.end(); });
    }
    const EstimateFile file = load_estimates(rf.path);
    run.rejected = file.rejected;
    std::vector<EstimateRecord> in_scope;
    for (const auto& e : file.records) {
      if (std::binary_search(run.objects.begin(), run.objects.end(), e.object_id)) in_scope.push_back(e);
      else run.out_of_scope.push_back(e);
    }
    std::vector<GroundTruthRecord> gt;
    for (const auto& g : data.ground_truth) {
      if (std::binary_search(run.objects.begin(), run.objects.end(), g.object_id)) gt.push_back(g);
    }
    run.match = match_records(in_scope, gt, cfg.visibility_min, cfg.duplicate_policy);
    report.excluded += run.match.excluded_estimates.size();

    const std::string file_hash = ContentHash().add_file(rf.path).hex();
    ContentHash objects_hash;
    for (const int id : run.objects) objects_hash.add(std::to_string(id));
    const std::string metrics_key = ContentHash().add(data.ingest_hash).add(file_hash).add(objects_hash.hex()).hex();
    run_metrics(run, data, evaluators, cfg, cache, metrics_key, report);
    const std::string trials_key = ContentHash().add(metrics_key).add(trial_params).add(gripper_list).hex();
    run_trials(run, data, catalog, grippers, *outcome, cfg, cache, trials_key, report);
    input_hash.add(rf.name).add(file_hash);

    for (const int id : run.objects) {
      for (const auto g : cfg.grippers) {
        if (!catalog.find(id, g, cfg.grasp_index)) not_applicable.insert({run.name, id, g});
      }
    }
    report.pairs += run.match.pairs.size();
    report.trials += run.trials.size();
    report.indeterminate += static_cast<std::size_t>(
        std::count_if(run.trials.begin(), run.trials.end(), [](const TrialRecord& t) { return t.indeterminate(); }));
    log::info("estimator " + run.name + ": " + std::to_string(run.match.pairs.size()) + " pairs, " +
              std::to_string(run.trials.size()) + " trials");
    runs.push_back(std::move(run));
  }
  const std::string config_hash = ContentHash().add(cfg.canonical_json()).hex();
  write_outputs(cfg, data, runs, not_applicable, config_hash, input_hash.hex());
  return report;
}

// ---------------------------------------------------------------- catalog

bool CatalogReport::ok() const {
  return std::none_of(checks.begin(), checks.end(), [](const CatalogCheck& c) { return c.status == "fail"; });
}

std::string CatalogReport::text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << c.status << " object " << c.object_id << " " << to_string(c.gripper);
    if (c.grasp_index >= 0) out << " grasp " << c.grasp_index;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << "\n";
  }
  return out.str();
}

CatalogReport validate_catalog(const GraspCatalog& catalog, const std::map<int, ObjectModel>& models,
                               const std::map<GripperKind, GripperModel>& grippers, const SuccessCriterion& criterion) {
  CatalogReport report;
  for (const auto& [id, model] : models) {
    const RigidTransform sim_pose = catalog.object_pose_sim(id, model.vertices);
    for (const auto& [kind, gripper] : grippers) {
      const auto entries = catalog.entries_for(id, kind);
      if (entries.empty()) {
        report.checks.push_back({id, kind, -1, "not-applicable", "no reference grasp in the catalog"});
        continue;
      }
      const double span = kind == GripperKind::parallel ? gripper.stroke : gripper.finger_span;
      for (const auto* ref : entries) {
        CatalogCheck check{id, kind, ref->grasp_index, "pass", ""};
        const TrialSpec zero{&model, sim_pose, ref->hand_pose_ref, *ref};
        const auto out = surrogate_outcome(zero, gripper, criterion);
        if (!out.success) {
          check.status = "fail";
          check.detail = "zero deviation fails (" + std::string(to_string(out.stage)) + ": " + out.detail + ")";
        } else {
          const double magnitude = model.diameter + span + 1.0;
          for (int dx = -1; dx <= 1 && check.status == "pass"; ++dx)
            for (int dy = -1; dy <= 1 && check.status == "pass"; ++dy)
              for (int dz = -1; dz <= 1 && check.status == "pass"; ++dz) {
                if (!dx && !dy && !dz) continue;
                const Vec3 shift = Vec3(dx, dy, dz).normalized() * magnitude;
                const TrialSpec gross{&model, sim_pose, RigidTransform::from_translation(shift) * ref->hand_pose_ref, *ref};
                if (surrogate_outcome(gross, gripper, criterion).success) {
                  check.status = "fail";
                  check.detail = "gross translation (" + format_fixed(shift.x(), 1) + ", " + format_fixed(shift.y(), 1) +
                                 ", " + format_fixed(shift.z(), 1) + ") mm still succeeds";
                }
              }
        }
        report.checks.push_back(check);
      }
    }
  }
  return report;
}

CatalogReport run_validate_catalog(const RunConfig& cfg) {
  cfg.validate(false);
  const auto grippers = selected_grippers(cfg);
  const GraspCatalog catalog = load_grasp_catalog(cfg.grasp_catalog);
  std::vector<int> ids = cfg.objects;
  if (ids.empty()) {
    for (const auto& g : catalog.grasps()) ids.push_back(g.object_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  const auto models = load_models(cfg.models_dir, load_physical_sidecar(cfg.physical_sidecar), ids);
  return validate_catalog(catalog, models, grippers, criterion_of(cfg));
}

// ---------------------------------------------------------------- inspect

std::string run_inspect(const RunConfig& cfg, const InspectQuery& q) {
  cfg.validate(true);
  const auto rf = std::find_if(cfg.result_files.begin(), cfg.result_files.end(),
                               [&](const ResultFile& r) { return r.name == q.estimator; });
  if (rf == cfg.result_files.end()) config_fail("estimator", "no result file named '" + q.estimator + "'");
  const auto grippers = selected_grippers(cfg);
  const GraspCatalog catalog = load_grasp_catalog(cfg.grasp_catalog);
  const auto scene_dir = cfg.scenes_dir / [&] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", q.scene_id);
    return std::string(buf);
  }();
  if (!fs::exists(scene_dir)) config_fail("scene", "no directory " + scene_dir.string());
  const auto gt = load_scene_ground_truth(scene_dir);
  const auto cams = load_scene_cameras(scene_dir);
  const auto file = load_estimates(rf->path);
  std::vector<EstimateRecord> est;
  for (const auto& e : file.records) {
    if (e.scene_id == q.scene_id && e.image_id == q.image_id && e.object_id == q.object_id) est.push_back(e);
  }
  std::vector<GroundTruthRecord> gts;
  for (const auto& g : gt) {
    if (g.image_id == q.image_id && g.object_id == q.object_id) gts.push_back(g);
  }
  const auto match = match_records(est, gts, cfg.visibility_min, cfg.duplicate_policy);
  const MatchedPair* pair = nullptr;
  for (const auto& p : match.pairs) {
    if (q.instance < 0 || p.ground_truth.instance == q.instance) {
      pair = &p;
      break;
    }
  }
  std::ostringstream out;
  out << "pair: estimator " << q.estimator << ", scene " << q.scene_id << ", image " << q.image_id << ", object "
      << q.object_id << "\n";
  if (!pair) {
    out << "no matched pair (" << match.unmatched_ground_truth.size() << " unmatched ground truth, "
        << match.excluded_ground_truth.size() << " below visibility " << format_double(cfg.visibility_min) << ")\n";
    return out.str();
  }
  const auto models = load_models(cfg.models_dir, load_physical_sidecar(cfg.physical_sidecar), {q.object_id});
  const auto& model = models.at(q.object_id);
  const auto cam = cams.find(q.image_id);
  if (cam == cams.end()) throw Error(ErrorKind::ParseError, "no camera for image " + std::to_string(q.image_id));
  const RigidTransform sim_pose = catalog.object_pose_sim(q.object_id, model.vertices);

  out << "instance " << pair->ground_truth.instance << ", visibility " << format_double(pair->ground_truth.visibility)
      << ", estimate row " << pair->estimate.row << ", score " << format_double(pair->estimate.score) << "\n";
  out << "estimate pose:\n" << to_string(pair->estimate.pose) << "\n";
  out << "ground-truth pose:\n" << to_string(pair->ground_truth.pose) << "\n";
  const MetricRecord m = MetricEvaluator(model).evaluate(pair->estimate.pose, pair->ground_truth.pose, cam->second);
  out << "metrics:\n"
      << "  rotation_error_deg           " << format_fixed(m.rotation_error, 6) << "\n"
      << "  translation_error_mm         " << format_fixed(m.translation_error, 6) << "\n"
      << "  translation_along_view_mm    " << format_fixed(m.translation_error_along_view, 6) << "\n"
      << "  add_s_mm                     " << format_fixed(m.add_s, 6) << (model.symmetry.trivial() ? " (ADD)" : " (ADI)") << "\n"
      << "  mssd_mm                      " << format_fixed(m.mssd, 6) << "\n"
      << "  mspd_px                      " << (m.mspd_behind_camera ? std::string("inf (vertex behind camera)") : format_fixed(m.mspd, 6)) << "\n";
  out << "object pose in simulator:\n" << to_string(sim_pose) << "\n";
  for (const auto& [kind, gripper] : grippers) {
    const auto* ref = catalog.find(q.object_id, kind, cfg.grasp_index);
    out << "gripper " << to_string(kind) << ", grasp " << cfg.grasp_index << ":\n";
    if (!ref) {
      out << "  not applicable (no reference grasp)\n";
      continue;
    }
    const auto chain = transfer_deviation(pair->estimate.pose, pair->ground_truth.pose, sim_pose, *ref);
    out << "  deviation, dataset frame:\n" << to_string(chain.delta_world) << "\n";
    out << "  deviation, object frame:\n" << to_string(chain.delta_object) << "\n";
    out << "  deviation, simulator world:\n" << to_string(chain.delta_sim) << "\n";
    out << "  reference hand pose:\n" << to_string(ref->hand_pose_ref) << "\n";
    out << "  perturbed plan:\n" << to_string(chain.plan) << "\n";
    const TrialSpec spec{&model, sim_pose, chain.plan, *ref};
    const auto outcome = make_outcome_model(cfg.outcome_model);
    const auto res = outcome->evaluate("inspect", spec, gripper, criterion_of(cfg));
    out << "  outcome: " << (res.success ? "success" : "failure") << " (" << to_string(res.stage) << ")";
    if (!res.detail.empty()) out << ", " << res.detail;
    out << ", final distance " << format_fixed(res.final_distance_mm, 3) << " mm (target "
        << format_fixed(ref->target_hand_object_distance, 3) << ")\n";
  }
  return out.str();
}

}  // namespace poseval
