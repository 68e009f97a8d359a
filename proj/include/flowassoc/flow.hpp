#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flowassoc/context.hpp"
#include "flowassoc/params.hpp"
#include "flowassoc/rng.hpp"

namespace flowassoc::flow {

/// Execution policy for batched kernels. Both policies split the batch into
/// the same fixed chunks and reduce them in order, so results are bitwise
/// identical.
enum class Exec { serial, parallel };

struct FlowConfig {
  int input_dim = 5;
  int blocks = 16;
  int hidden = 64;
  int context_dim = 16;  // 0 disables the context encoder
  int window_dim = context::kStepDim;
  int gru_hidden = 32;
  int embed_dim = 8;
  int scene_clusters = 16;
  bool scene_conditioning = true;

  double learning_rate = 1e-3;
  int batch_size = 512;
  int epochs = 30;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kAlphaBound = 7.0;  // log-scale outputs squashed into (-7, 7)

/// Parameter-group indices of one flow block.
struct BlockLayout {
  int w_in = -1;      // H x D, masked
  int w_ctx = -1;     // H x C (absent without context)
  int b_in = -1;      // H
  int w_hid = -1;     // H x H, masked
  int b_hid = -1;     // H
  int w_mu = -1;      // D x H, masked
  int b_mu = -1;      // D
  int w_alpha = -1;   // D x H, masked
  int b_alpha = -1;   // D
  int log_scale = -1; // D, actnorm
  int bias = -1;      // D, actnorm
};

/// Input standardization stored with the model; `window_scale` divides the
/// context window displacements.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> window_scale;
};

class FlowModel {
 public:
  FlowModel() = default;
  /// Identity flow: output layers and actnorm at zero / unit scale, hidden
  /// layers randomly initialized from `config.seed`, unit standardization.
  explicit FlowModel(const FlowConfig& config);

  const FlowConfig& config() const { return config_; }
  int dim() const { return config_.input_dim; }
  bool has_context() const { return config_.context_dim > 0; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<BlockLayout>& blocks() const { return blocks_; }
  const context::EncoderLayout& encoder() const { return encoder_; }

  Standardization& standardization() { return standard_; }
  const Standardization& standardization() const { return standard_; }

  const Eigen::MatrixXd& mask_in() const { return mask_in_; }
  const Eigen::MatrixXd& mask_hid() const { return mask_hid_; }
  const Eigen::MatrixXd& mask_out() const { return mask_out_; }

  /// Random values for every parameter (masked entries stay zero). Used by
  /// tests that need a non-trivial flow.
  void randomize(std::uint64_t seed, double scale = 0.3);

  /// Scene clusters for mapping descriptors to a conditioning index.
  context::SceneClusterModel scene_clusters;
  /// Maximum association cost (negative log-likelihood) accepted as a match.
  double accept_nll = std::numeric_limits<double>::infinity();

  /// -1 when no clusters are attached.
  int cluster_for(std::span<const double> descriptor) const;

  bool same_parameters(const FlowModel& other) const { return params_.values() == other.params_.values(); }

 private:
  void build_layout();

  FlowConfig config_;
  ParamStore params_;
  std::vector<BlockLayout> blocks_;
  context::EncoderLayout encoder_;
  Standardization standard_;
  Eigen::MatrixXd mask_in_, mask_hid_, mask_out_;
};

/// Track window and scene cluster conditioning one evaluation. A null window
/// means "no history" (fully masked).
struct Conditioning {
  const context::TrackWindow* window = nullptr;
  int cluster = -1;
};

struct DensityResult {
  std::vector<double> z0;
  double log_det = 0.0;
};

// Single-sample operations. These run the scalar reference path.

/// Density direction x -> z0. Throws NumericalError("flow block <l>") on a
/// non-finite intermediate.
DensityResult density_pass(const FlowModel& model, std::span<const double> x, const Conditioning& cond = {});
double log_prob(const FlowModel& model, std::span<const double> x, const Conditioning& cond = {});
/// Sampling direction z0 -> x (sequential per dimension).
std::vector<double> sample_pass(const FlowModel& model, std::span<const double> z0, const Conditioning& cond = {});
std::vector<double> sample(const FlowModel& model, Rng& rng, const Conditioning& cond = {});
std::vector<double> context_vector(const FlowModel& model, const Conditioning& cond);

/// Column-per-sample data. `windows` and `clusters` may be empty when the
/// model has no context.
struct FlowBatch {
  Eigen::MatrixXd x;
  std::vector<context::TrackWindow> windows;
  std::vector<int> clusters;

  std::size_t size() const { return static_cast<std::size_t>(x.cols()); }
  FlowBatch subset(std::span<const std::size_t> idx) const;
};

// Batched kernels (Eigen, chunked, OpenMP across chunks).

Eigen::MatrixXd context_batch(const FlowModel& model, std::span<const context::TrackWindow> windows,
                              std::span<const int> clusters, Exec exec = Exec::parallel);
/// log p(x | ctx) for each column; `ctx` is context_dim x N (ignored without context).
Eigen::VectorXd log_prob_with_context(const FlowModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& ctx,
                                      Exec exec = Exec::parallel);
Eigen::VectorXd log_prob_batch(const FlowModel& model, const FlowBatch& batch, Exec exec = Exec::parallel);
double mean_nll(const FlowModel& model, const FlowBatch& batch, Exec exec = Exec::parallel);

struct Gradient {
  double loss = 0.0;          // mean negative log-likelihood
  std::vector<double> grad;   // d loss / d params, ParamStore layout
};

/// Exact reverse-mode gradient of the mean NLL with respect to every
/// parameter (flow blocks, context encoder, scene embeddings). Throws
/// NumericalError naming the parameter group on a non-finite gradient.
Gradient grad_nll(const FlowModel& model, const FlowBatch& batch, Exec exec = Exec::parallel);

/// Gradient with respect to the raw window inputs (one W x N matrix per step).
std::vector<Eigen::MatrixXd> grad_window_inputs(const FlowModel& model, const FlowBatch& batch);

// Training.

struct EpochStats {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
};

struct TrainResult {
  FlowModel model;
  std::vector<EpochStats> trace;
  double init_val_nll = 0.0;
  double best_val_nll = 0.0;
  int best_epoch = 0;  // 0 = initialization
};

void fit_standardization(FlowModel& model, const FlowBatch& data);
/// Sets each block's actnorm so its outputs on `batch` have zero mean and
/// unit variance per dimension.
void init_actnorm(FlowModel& model, const FlowBatch& batch);

/// Maximum-likelihood training with Adam (0.9, 0.999, 1e-8). A seeded 10%
/// split is held out; the parameters with the best held-out NLL (including
/// the initialization) are returned.
TrainResult train(const FlowBatch& data, const FlowConfig& config,
                  const context::SceneClusterModel* clusters = nullptr);

/// Deterministic train/validation split used by `train`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                            std::uint64_t seed);

// Factorized baseline: independent flows over (dx, dy), (dw, dh) and dd.

struct FactorizedModel {
  static constexpr std::array<std::array<int, 2>, 3> kGroups{{{0, 2}, {2, 2}, {4, 1}}};  // {first, size}
  std::array<FlowModel, 3> parts;
  double accept_nll = std::numeric_limits<double>::infinity();
};

FactorizedModel factorized_identity(const FlowConfig& base);
struct FactorizedTrainResult {
  FactorizedModel model;
  std::array<TrainResult, 3> parts;
  double best_val_nll = 0.0;  // sum of the parts on the shared split
};
FactorizedTrainResult factorized_train(const FlowBatch& data, const FlowConfig& config,
                                       const context::SceneClusterModel* clusters = nullptr);
double factorized_log_prob(const FactorizedModel& model, std::span<const double> x, const Conditioning& cond = {});
Eigen::VectorXd factorized_log_prob_batch(const FactorizedModel& model, const FlowBatch& batch,
                                          Exec exec = Exec::parallel);

// Checkpoints: versioned text, lossless doubles.

void save_checkpoint(const std::string& path, const FlowModel& model);
FlowModel load_flow_checkpoint(const std::string& path);
void save_checkpoint(const std::string& path, const FactorizedModel& model);
FactorizedModel load_factorized_checkpoint(const std::string& path);
/// "flow" or "factorized".
std::string checkpoint_kind(const std::string& path);

}  // namespace flowassoc::flow
