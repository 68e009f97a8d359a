#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowassoc/context.hpp"
#include "flowassoc/core.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/kalman.hpp"

namespace flowassoc::assoc {

/// Rows are detections, columns are tracks. `masked(j, i)` marks forbidden
/// cells; their cost value is meaningless.
struct CostMatrix {
  Eigen::MatrixXd cost;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> masked;
  std::vector<int> det_ids;
  std::vector<int> track_ids;

  CostMatrix() = default;
  CostMatrix(int rows, int cols);
  int rows() const { return static_cast<int>(cost.rows()); }
  int cols() const { return static_cast<int>(cost.cols()); }
  bool allowed(int j, int i) const { return !masked(j, i); }
};

enum class ProviderKind { iou, euclidean, flow, factorized };

std::string to_string(ProviderKind kind);
ProviderKind parse_provider(const std::string& name);

/// Everything a provider may look at for one live track.
struct TrackInput {
  int id = 0;
  kalman::Measurement predicted = kalman::Measurement::Zero();  // [cx, cy, w, h, d]
  context::TrackWindow window;  // all-masked for newborn tracks
  int cluster = -1;
};

/// Association cost between predicted tracks and detections; lower is better
/// for every kind.
class CostProvider {
 public:
  static CostProvider iou();
  static CostProvider euclidean();
  static CostProvider flow(std::shared_ptr<const flow::FlowModel> model);
  static CostProvider factorized(std::shared_ptr<const flow::FactorizedModel> model);

  ProviderKind kind() const { return kind_; }
  /// Flow-based providers see the distance channel (and are gated on it).
  bool uses_distance() const { return kind_ == ProviderKind::flow || kind_ == ProviderKind::factorized; }
  /// Largest raw cost accepted as a match.
  double accept_threshold() const;
  const flow::FlowModel* flow_model() const { return flow_.get(); }
  const flow::FactorizedModel* factorized_model() const { return factorized_.get(); }

 private:
  ProviderKind kind_ = ProviderKind::iou;
  std::shared_ptr<const flow::FlowModel> flow_;
  std::shared_ptr<const flow::FactorizedModel> factorized_;
};

/// Signed differences prediction - candidate for cx, cy, w, h, d.
DeltaFeatures compute_deltas(const kalman::Measurement& predicted, const Detection& det);

struct GateParams {
  double center_px = 150.0;
  double distance_m = 10.0;
};

struct CostDiagnostics {
  int gated = 0;
  int numerical_failures = 0;  // cells masked because the provider failed
};

CostMatrix build_cost_matrix(std::span<const TrackInput> tracks, std::span<const Detection> dets,
                             const CostProvider& provider, const GateParams& gate,
                             CostDiagnostics* diag = nullptr, flow::Exec exec = flow::Exec::parallel);

/// Row softmax and column softmax of exp(cost / sigma) over unmasked cells,
/// combined by cell-wise minimum. With `negate` the softmax runs on
/// exp(-cost / sigma) (a likelihood) and the result is returned as 1 - p so
/// it stays a cost.
CostMatrix normalize_cost(const CostMatrix& phi, double sigma, bool negate = false);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total_cost = 0.0;
};

/// Minimum-cost assignment over unmasked cells (rectangular allowed). The
/// number of pairs is maximized first, then the cost.
Assignment hungarian(const Eigen::MatrixXd& cost, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& masked);
Assignment hungarian(const Eigen::MatrixXd& cost);
Assignment hungarian(const CostMatrix& m);

/// IoU matching of two box sets, pairs below `min_iou` forbidden.
std::vector<std::pair<int, int>> match_by_iou(std::span<const BBox> a, std::span<const BBox> b, double min_iou);

struct AssocParams {
  GateParams gate;
  double sigma = 1.0;
  bool negate = false;
  /// -1: provider default (on for flow/factorized, off for iou/euclidean).
  int normalize = -1;
  /// Overrides the provider's raw-cost acceptance threshold when finite.
  double accept_cost = std::numeric_limits<double>::infinity();
  /// Matches with a normalized cost above this are rejected (normalized runs only).
  double max_normalized = std::numeric_limits<double>::infinity();
};

struct AssocResult {
  CostMatrix raw;
  CostMatrix normalized;  // empty when normalization is off
  std::vector<std::pair<int, int>> matches;  // (det index, track index)
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_tracks;
  CostDiagnostics diag;
};

AssocResult associate(std::span<const TrackInput> tracks, std::span<const Detection> dets,
                      const CostProvider& provider, const AssocParams& params,
                      flow::Exec exec = flow::Exec::parallel);

/// Tabular dump of one frame: "frame,det,track_id,raw,normalized,masked".
std::string format_cost_dump(int frame, const AssocResult& r);

}  // namespace flowassoc::assoc
