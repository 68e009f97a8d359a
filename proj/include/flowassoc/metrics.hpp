#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowassoc/sim.hpp"
#include "flowassoc/tracker.hpp"

namespace flowassoc::metrics {

inline constexpr double kMatchIou = 0.5;
inline constexpr std::array<double, 3> kAlpThresholds{0.5, 1.0, 2.0};
inline constexpr double kDeltaThreshold = 1.25;

using Bins = std::vector<std::pair<double, double>>;  // inclusive occlusion ranges
Bins default_bins();

/// 0.5 * (log var + (d - truth)^2 / var). Throws on var <= 0.
double gnll(double d, double var, double truth);

struct DistancePair {
  double truth = 0.0;
  double estimate = 0.0;
  double var = 0.0;  // <= 0: no variance (excluded from GNLL)
  double occlusion = 0.0;
};

/// Sufficient statistics, so per-sequence results pool exactly.
struct DistanceStats {
  long n = 0;
  long delta_hits = 0;
  std::array<long, 3> alp_hits{};
  double abs_rel = 0.0, sq_rel = 0.0, sq_err = 0.0, sq_log = 0.0;
  std::vector<double> aloe_sum;
  std::vector<long> aloe_n;
  double gnll_sum = 0.0;
  long gnll_n = 0;

  void add(const DistanceStats& o);
};

/// Throws InvalidArgument when a truth or estimate is <= 0.
DistanceStats accumulate(std::span<const DistancePair> pairs, const Bins& bins);

struct DistanceMetrics {
  long count = 0;
  std::optional<double> delta;  // fraction with max(d/d*, d*/d) < 1.25
  std::array<std::optional<double>, 3> alp;
  std::optional<double> abs_rel, sq_rel, rmse, rmse_log;
  std::vector<std::optional<double>> aloe;  // per bin, absent when empty
  std::optional<double> gnll;
};

DistanceMetrics summarize(const DistanceStats& s);
DistanceMetrics distance_metrics(std::span<const DistancePair> pairs, const Bins& bins = default_bins());
std::vector<std::optional<double>> aloe(std::span<const DistancePair> pairs, const Bins& bins);

struct TrackingCounts {
  long gt = 0, pred = 0;
  long tp = 0, fp = 0, fn = 0, idsw = 0;
  long idtp = 0, idfp = 0, idfn = 0;

  void add(const TrackingCounts& o);
  std::optional<double> idf1() const;
  std::optional<double> mota() const;
};

struct Evaluation {
  TrackingCounts counts;
  std::vector<DistancePair> pairs;  // CLEAR matches with distances
};

/// Ground-truth rows with `consider == false` are ignored, together with
/// any prediction matched to them.
Evaluation evaluate_tracking(const std::vector<sim::GroundTruthRow>& gt, const std::vector<tracker::TrackRow>& pred);

/// IDF1 alone (global identity matching, IoU >= 0.5 per frame).
std::optional<double> idf1(const std::vector<sim::GroundTruthRow>& gt, const std::vector<tracker::TrackRow>& pred);

struct MetricsReport {
  std::string name;
  Bins bins;
  TrackingCounts counts;
  DistanceStats distance;
};

MetricsReport evaluate(const std::string& name, const std::vector<sim::GroundTruthRow>& gt,
                       const std::vector<tracker::TrackRow>& pred, const Bins& bins = default_bins());
/// Pools counts and statistics (CLEAR accumulation).
MetricsReport aggregate(const std::string& name, std::span<const MetricsReport> reports);

/// Pretty JSON with derived metrics (null when undefined) and raw counts.
std::string to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);

}  // namespace flowassoc::metrics
