#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flowassoc/config.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/metrics.hpp"
#include "flowassoc/tracker.hpp"

namespace flowassoc::experiment {

struct Sequence {
  std::string name;
  sim::ScenarioConfig config;
  tracker::LabeledSequence data;
};

/// Generates, renders and applies the evaluation filters.
Sequence simulate_sequence(const sim::ScenarioConfig& config);
std::vector<Sequence> simulate_all(const std::vector<sim::ScenarioConfig>& configs);

/// Sequence directory: scenario.txt, det.txt (+ det.dist.txt), gt.txt
/// (+ gt.dist.txt), scene.txt. The data directory lists its sequences in
/// sequences.txt.
void write_sequence(const std::string& dir, const Sequence& seq);
Sequence read_sequence(const std::string& dir);
void write_dataset(const std::string& dir, const std::vector<Sequence>& seqs, std::uint64_t seed);
std::vector<Sequence> read_dataset(const std::string& dir);

/// Replaces every detection's sensor reading with ground truth where it
/// matches a ground-truth box.
Sequence with_gt_distances(const Sequence& seq);

enum class ModelKind { joint, factorized };

struct TrainedModel {
  ModelKind kind = ModelKind::joint;
  std::shared_ptr<flow::FlowModel> joint;
  std::shared_ptr<flow::FactorizedModel> factorized;
  std::vector<flow::EpochStats> trace;  // joint: per epoch; factorized: summed over parts
  double init_val_nll = 0.0;
  double best_val_nll = 0.0;
  std::size_t samples = 0;

  assoc::CostProvider provider() const;
};

/// Fits scene clusters on the sequences' descriptors, extracts inliers and
/// trains. Every identity with at least one previous matched detection
/// contributes samples.
TrainedModel train_model(const std::vector<Sequence>& seqs, const flow::FlowConfig& config,
                         const tracker::TrackerParams& params, ModelKind kind);

/// One line per epoch: "epoch,train_nll,val_nll".
std::string format_trace(const TrainedModel& m);

/// Mean distance error of the detections fed to the tracker against the
/// ground truth they match (IoU >= 0.5). Zero when the sensor is bypassed.
double sensor_rmse(const Sequence& seq);

struct RunResult {
  std::vector<metrics::MetricsReport> per_sequence;
  metrics::MetricsReport total;
  std::vector<tracker::TrackOutput> outputs;
};

RunResult run_tracker(const std::vector<Sequence>& seqs, const assoc::CostProvider& provider,
                      const tracker::TrackerParams& params, const metrics::Bins& bins);

/// Writes <out>/<name>.txt (+ .dist.txt sidecar) and <name>.log per sequence.
void write_tracks(const std::string& out_dir, const std::vector<Sequence>& seqs, const RunResult& r);
std::vector<tracker::TrackRow> read_tracks(const std::string& path);

/// Reports per sequence and an aggregate ("aggregate.json"). Throws when a
/// ground-truth sequence has no prediction file.
std::vector<metrics::MetricsReport> evaluate_dirs(const std::string& gt_dir, const std::string& pred_dir,
                                                  const metrics::Bins& bins, const std::string& out_dir);

/// Provider grid over seeds; returns a tab-separated table.
std::string compare(const config::ExperimentConfig& cfg);
/// Temperature / negation / normalization / conditioning sweep for the flow cost.
std::string ablate(const config::ExperimentConfig& cfg);

}  // namespace flowassoc::experiment
