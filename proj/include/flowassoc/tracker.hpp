#pragma once

#include <span>
#include <string>
#include <vector>

#include "flowassoc/assoc.hpp"
#include "flowassoc/core.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/kalman.hpp"
#include "flowassoc/sim.hpp"

namespace flowassoc::tracker {

struct TrackerParams {
  /// Detections below this confidence are ignored (single stage) or only
  /// used by the second pass (two-stage).
  double det_threshold = 0.5;
  int n_init = 3;
  int max_age = 30;
  assoc::AssocParams assoc;
  kalman::KalmanParams kalman;
  /// Predict the distance channel as the last raw reading instead of the
  /// filtered estimate.
  bool raw_last_distance = false;

  bool two_stage = false;
  double low_threshold = 0.1;
  double second_stage_accept = 0.5;  // max 1 - IoU in the second pass

  flow::Exec exec = flow::Exec::parallel;

  void validate() const;
};

struct TrackRow {
  int frame = 0;
  int id = 0;
  BBox bbox;
  double distance = 0.0;
  double distance_var = 0.0;
};

/// One accepted match: detection index within the frame, track id, raw cost.
struct MatchLogEntry {
  int frame = 0;
  int stage = 1;
  int det = 0;
  int track_id = 0;
  double cost = 0.0;
};

struct TrackOutput {
  std::vector<TrackRow> rows;  // sorted by (frame, id)
  std::vector<MatchLogEntry> log;
  int numerical_failures = 0;  // cost cells masked because the provider failed
  int kalman_failures = 0;     // updates skipped because the filter failed
};

/// Runs the tracker over one sequence. `scene_descriptor` (may be empty)
/// selects the scene cluster for flow-based providers. Rows of a tentative
/// track are emitted retroactively once it is confirmed.
TrackOutput track_sequence(const std::vector<FrameObservations>& frames, const assoc::CostProvider& provider,
                           const TrackerParams& params, std::span<const double> scene_descriptor = {});

/// "frame,stage,det,track_id,cost" lines.
std::string format_match_log(const std::vector<MatchLogEntry>& log);

/// One simulated (or imported) sequence with its ground truth.
struct LabeledSequence {
  std::vector<FrameObservations> frames;
  std::vector<sim::GroundTruthRow> ground_truth;
  std::vector<double> descriptor;
};

struct InlierOptions {
  int min_history = 2;
  /// A gap longer than this many frames between matched detections starts
  /// a fresh history (the tracker would have dropped the track).
  int max_gap = 30;
  double match_iou = 0.5;
};

/// Association samples for correct track-detection pairs: detections are
/// matched to ground truth per frame, the Kalman filter runs along each
/// identity's matched detections, and the next matched detection gives the
/// deltas. Clusters come from `clusters` when given, else -1.
flow::FlowBatch build_inlier_dataset(std::span<const LabeledSequence> sequences, const TrackerParams& params,
                                     const InlierOptions& options = {},
                                     const context::SceneClusterModel* clusters = nullptr);

}  // namespace flowassoc::tracker
