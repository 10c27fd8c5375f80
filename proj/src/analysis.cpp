#include "poseval/analysis.hpp"

#include "poseval/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace poseval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double finite_median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  return values.empty() ? kNaN : median(std::move(values));
}

std::vector<const TrialRecord*> in_group(std::span<const TrialRecord> records, const GroupKey& key) {
  std::vector<const TrialRecord*> out;
  for (const auto& r : records) {
    if (r.key.estimator == key.estimator && r.key.object_id == key.object_id && r.key.gripper == key.gripper) {
      out.push_back(&r);
    }
  }
  return out;
}

FailureCurve curve_from(const std::vector<const TrialRecord*>& records, Metric metric) {
  std::vector<std::pair<double, bool>> samples;  // (value, failed)
  for (const auto* r : records) {
    if (r->indeterminate()) continue;
    const double v = r->metrics ? metric_value(*r->metrics, metric) : kInf;
    samples.emplace_back(std::isnan(v) ? kInf : v, !r->success);
  }
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "failure curve needs at least one decided trial");
  std::sort(samples.begin(), samples.end());
  FailureCurve curve;
  const double total = static_cast<double>(samples.size());
  std::size_t failures = 0;
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t k = i;
    while (k < samples.size() && samples[k].first == samples[i].first) failures += samples[k++].second ? 1 : 0;
    curve.push_back({samples[i].first, static_cast<double>(failures) / total});
    i = k;
  }
  return curve;
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::rot: return "rot";
    case Metric::trans: return "trans";
    case Metric::add_s: return "add_s";
    case Metric::mssd: return "mssd";
    case Metric::mspd: return "mspd";
  }
  return "unknown";
}

double metric_value(const MetricRecord& r, Metric m) {
  switch (m) {
    case Metric::rot: return r.rotation_error;
    case Metric::trans: return r.translation_error;
    case Metric::add_s: return r.add_s;
    case Metric::mssd: return r.mssd;
    case Metric::mspd: return r.mspd;
  }
  return kNaN;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "percentile of an empty set");
  if (!(q >= 0 && q <= 1)) throw Error(ErrorKind::InvalidArgument, "percentile rank outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

SummaryResult summarize(std::span<const TrialRecord> records, std::span<const GroupKey> groups,
                        const std::map<GroupKey, std::size_t>& excluded_counts) {
  std::vector<GroupKey> keys(groups.begin(), groups.end());
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  SummaryResult result;
  for (const auto& key : keys) {
    const auto members = in_group(records, key);
    ObjectSummary s;
    s.key = key;
    if (const auto it = excluded_counts.find(key); it != excluded_counts.end()) s.excluded_count = it->second;
    std::vector<double> rot, trans, add, mssd, mspd;
    for (const auto* r : members) {
      if (r->indeterminate()) {
        ++s.indeterminate_count;
        continue;
      }
      ++s.trial_count;
      if (r->success) ++s.success_count;
      if (!r->metrics) {
        ++s.missing_count;
        continue;
      }
      const auto& m = *r->metrics;
      const bool sentinel = !(std::isfinite(m.rotation_error) && std::isfinite(m.translation_error) &&
                              std::isfinite(m.add_s) && std::isfinite(m.mssd) && std::isfinite(m.mspd));
      if (sentinel) ++s.sentinel_count;
      rot.push_back(m.rotation_error);
      trans.push_back(m.translation_error);
      add.push_back(m.add_s);
      mssd.push_back(m.mssd);
      mspd.push_back(m.mspd);
    }
    if (s.trial_count == 0) {
      result.gaps.push_back({key, s.indeterminate_count > 0 ? "EmptyGroup: every trial indeterminate"
                                                            : "EmptyGroup: no trials"});
      continue;
    }
    s.median_rotation_error = finite_median(rot);
    s.median_translation_error = finite_median(trans);
    std::erase_if(trans, [](double v) { return !std::isfinite(v); });
    s.p90_translation_error = trans.empty() ? kNaN : percentile(trans, 0.9);
    s.median_add_s = finite_median(add);
    s.median_mssd = finite_median(mssd);
    s.median_mspd = finite_median(mspd);
    s.success_rate = static_cast<double>(s.success_count) / static_cast<double>(s.trial_count);
    result.rows.push_back(s);
  }
  return result;
}

FailureCurve failure_cdf(std::span<const TrialRecord> records, Metric metric) {
  std::vector<const TrialRecord*> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(&r);
  return curve_from(all, metric);
}

std::string_view to_string(AucNormalization n) {
  return n == AucNormalization::raw ? "raw" : "unit_range";
}

double auc(const FailureCurve& curve, AucNormalization normalization) {
  double max_finite = -kInf;
  for (const auto& p : curve) {
    if (std::isfinite(p.value)) max_finite = std::max(max_finite, p.value);
  }
  if (!(max_finite > 0)) {
    throw Error(ErrorKind::DegenerateRange, "largest finite metric value is not positive; area is defined as 0");
  }
  double area = 0;
  double x0 = 0, y0 = 0;
  for (const auto& p : curve) {
    if (!std::isfinite(p.value)) break;
    if (p.value <= 0) {
      y0 = p.failure_fraction;
      continue;
    }
    area += (p.value - x0) * (y0 + p.failure_fraction) / 2;
    x0 = p.value;
    y0 = p.failure_fraction;
  }
  return normalization == AucNormalization::raw ? area : area / max_finite;
}

std::vector<AucRecord> auc_table(std::span<const TrialRecord> records, std::span<const GroupKey> groups,
                                 std::span<const Metric> metrics, AucNormalization normalization) {
  std::vector<GroupKey> keys(groups.begin(), groups.end());
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<AucRecord> out;
  for (const auto& key : keys) {
    const auto members = in_group(records, key);
    const bool decided = std::any_of(members.begin(), members.end(), [](const auto* r) { return !r->indeterminate(); });
    if (!decided) continue;
    for (const Metric m : metrics) {
      AucRecord rec{key, m, 0, false};
      try {
        rec.auc = auc(curve_from(members, m), normalization);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRange) throw;
        rec.degenerate_range = true;
      }
      out.push_back(rec);
    }
  }
  return out;
}

std::vector<ViewAxisRow> view_axis_decomposition(std::span<const PairResult> pairs) {
  std::map<std::pair<std::string, int>, std::vector<double>> fractions;
  for (const auto& p : pairs) {
    const double total = p.metrics.translation_error;
    if (!(total > 0) || !std::isfinite(total)) continue;
    const double f = p.metrics.translation_error_along_view / total;
    fractions[{p.estimator, p.object_id}].push_back(f);
    fractions[{p.estimator, kPooledObject}].push_back(f);
  }
  std::vector<ViewAxisRow> out;
  for (auto& [key, values] : fractions) {
    const std::size_t n = values.size();
    out.push_back({key.first, key.second, median(std::move(values)), n});
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t k = i;
    while (k < idx.size() && v[idx[k]] == v[idx[i]]) ++k;
    const double r = (static_cast<double>(i) + static_cast<double>(k - 1)) / 2 + 1;
    for (std::size_t j = i; j < k; ++j) ranks[idx[j]] = r;
    i = k;
  }
  return ranks;
}

}  // namespace

double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidArgument, "rank correlation needs equal-length inputs");
  if (a.size() < 2) return kNaN;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace poseval
