#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "flowassoc/params.hpp"

namespace flowassoc::context {

inline constexpr int kWindowLength = 8;
inline constexpr int kStepDim = 5;

using Observation = std::array<double, kStepDim>;  // [cx, cy, w, h, d]

/// Relative displacements between consecutive matched observations, newest
/// last. Short histories are padded at the front; padded steps are exact
/// zeros with valid = false.
struct TrackWindow {
  std::array<std::array<double, kStepDim>, kWindowLength> steps{};
  std::array<bool, kWindowLength> valid{};

  int valid_count() const;
};

/// Uses the last (up to) kWindowLength + 1 observations. Throws on an empty
/// history.
TrackWindow build_window(std::span<const Observation> history);

/// k-means model over z-normalized scene descriptors.
struct SceneClusterModel {
  std::vector<double> mean;    // descriptor normalization
  std::vector<double> stddev;
  Eigen::MatrixXd centroids;   // dim x k, normalized space
  std::vector<double> sse_history;  // within-cluster SSE after each Lloyd iteration

  int k() const { return static_cast<int>(centroids.cols()); }
  int dim() const { return static_cast<int>(centroids.rows()); }
  bool empty() const { return centroids.size() == 0; }
  std::vector<double> normalize(std::span<const double> descriptor) const;
  /// Centroid i mapped back to descriptor units.
  std::vector<double> centroid(int i) const;
};

/// k-means++ seeding, then Lloyd iterations until the largest centroid shift
/// drops below 1e-6 or 100 iterations. Throws with fewer than k distinct points.
SceneClusterModel kmeans_fit(const std::vector<std::vector<double>>& descriptors, int k, std::uint64_t seed);

/// Nearest centroid in squared L2 (normalized space); ties go to the lowest index.
int assign_cluster(std::span<const double> descriptor, const SceneClusterModel& model);

struct EncoderDims {
  int window_dim = kStepDim;
  int gru_hidden = 32;
  int embed_dim = 8;
  int clusters = 16;
  int out_dim = 16;
};

/// Indices of the encoder's parameter groups inside a ParamStore.
struct EncoderLayout {
  EncoderDims dims;
  int w_input = -1;   // 3G x W, gate order [reset; update; candidate]
  int w_hidden = -1;  // 3G x G
  int b_input = -1;   // 3G
  int b_hidden = -1;  // 3G
  int embedding = -1; // E x K, one column per scene cluster
  int no_scene = -1;  // E, used when conditioning is off or the cluster is unknown
  int w_proj = -1;    // C x (G + E)
  int b_proj = -1;    // C
};

EncoderLayout add_encoder_params(ParamStore& store, const EncoderDims& dims);

/// Per-step activations kept for the backward pass.
struct EncoderCache {
  struct Step {
    bool any_valid = false;
    Eigen::MatrixXd x, h_prev, reset, update, cand, hidden_cand;
    std::vector<char> mask;
  };
  std::vector<Step> steps;
  Eigen::MatrixXd features;  // (G + E) x N
  Eigen::MatrixXd out;       // C x N
  std::vector<int> embed_col;  // -1 -> no_scene vector
};

/// Batched forward. `use_scene` false routes every sample to the no-scene
/// vector. `window_scale` divides each displacement component.
Eigen::MatrixXd encode_batch(const ParamStore& store, const EncoderLayout& layout,
                             std::span<const TrackWindow> windows, std::span<const int> clusters, bool use_scene,
                             std::span<const double> window_scale, EncoderCache* cache);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(context).
/// `grad_steps`, when non-null, receives d(loss)/d(raw window step) per step.
void encode_backward(const ParamStore& store, const EncoderLayout& layout, const EncoderCache& cache,
                     const Eigen::MatrixXd& grad_out, std::span<const double> window_scale, std::vector<double>& grad,
                     std::vector<Eigen::MatrixXd>* grad_steps = nullptr);

/// Scalar single-sample reference of encode_batch.
std::vector<double> encode_reference(const ParamStore& store, const EncoderLayout& layout, const TrackWindow& window,
                                     int cluster, bool use_scene, std::span<const double> window_scale);

}  // namespace flowassoc::context
