#pragma once

#include "poseval/grasp_trial.hpp"
#include "poseval/metrics.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace poseval {

enum class Metric { rot, trans, add_s, mssd, mspd };

inline constexpr Metric kAllMetrics[] = {Metric::rot, Metric::trans, Metric::add_s, Metric::mssd, Metric::mspd};
// The metrics tabulated for AUC unless MSPD is requested as well.
inline constexpr Metric kAucMetrics[] = {Metric::rot, Metric::trans, Metric::add_s, Metric::mssd};

std::string_view to_string(Metric m);
double metric_value(const MetricRecord& r, Metric m);

// Linear interpolation between closest ranks (position q * (n - 1)).
// Throws InvalidArgument for an empty input or q outside [0, 1].
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

struct GroupKey {
  std::string estimator;
  int object_id = 0;
  GripperKind gripper = GripperKind::parallel;

  auto tie() const { return std::tie(estimator, object_id, gripper); }
  bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
  bool operator==(const GroupKey& o) const { return tie() == o.tie(); }
};

struct ObjectSummary {
  GroupKey key;
  double median_rotation_error = 0;
  double median_translation_error = 0;
  double p90_translation_error = 0;
  double median_add_s = 0;
  double median_mssd = 0;
  double median_mspd = 0;
  double success_rate = 0;
  std::size_t trial_count = 0;     // successes + failures, missing estimates included
  std::size_t success_count = 0;
  std::size_t missing_count = 0;   // ground truth without an estimate
  std::size_t excluded_count = 0;  // ground truth dropped by the visibility filter
  std::size_t sentinel_count = 0;  // records with a non-finite metric
  std::size_t indeterminate_count = 0;
};

struct SummaryGap {
  GroupKey key;
  std::string reason;
};

struct SummaryResult {
  std::vector<ObjectSummary> rows;  // sorted by key
  std::vector<SummaryGap> gaps;     // groups with no decided trial
};

// Groups are given explicitly so that empty groups are reported, not lost.
SummaryResult summarize(std::span<const TrialRecord> records, std::span<const GroupKey> groups,
                        const std::map<GroupKey, std::size_t>& excluded_counts = {});

struct CurvePoint {
  double value = 0;             // metric value, +inf for missing/behind-camera
  double failure_fraction = 0;  // failures at or below `value` over all records
};
using FailureCurve = std::vector<CurvePoint>;

// One point per distinct metric value. Missing estimates enter at +inf so the
// final point equals the overall failure rate; indeterminate trials are left out.
FailureCurve failure_cdf(std::span<const TrialRecord> records, Metric metric);

enum class AucNormalization { raw, unit_range };
std::string_view to_string(AucNormalization n);

// Trapezoidal area of the piecewise-linear curve over [0, largest finite
// value], starting from (0, 0) when the curve begins above zero. Throws
// DegenerateRange when the largest finite value is 0 or absent.
double auc(const FailureCurve& curve, AucNormalization normalization = AucNormalization::raw);

struct AucRecord {
  GroupKey key;
  Metric metric = Metric::rot;
  double auc = 0;
  bool degenerate_range = false;  // auc fixed to 0
};

std::vector<AucRecord> auc_table(std::span<const TrialRecord> records, std::span<const GroupKey> groups,
                                 std::span<const Metric> metrics,
                                 AucNormalization normalization = AucNormalization::raw);

struct PairResult {
  std::string estimator;
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  int instance = 0;
  MetricRecord metrics;
};

struct ViewAxisRow {
  std::string estimator;
  int object_id = 0;  // kPooledObject for the all-object row
  double median_fraction = 0;
  std::size_t count = 0;
};
inline constexpr int kPooledObject = -1;

// Median of along_view / total over pairs with total > 0.
std::vector<ViewAxisRow> view_axis_decomposition(std::span<const PairResult> pairs);

// Spearman rank correlation with average ranks for ties; NaN when either
// side is constant.
double rank_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace poseval
