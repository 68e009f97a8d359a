#pragma once

#include <Eigen/Core>

#include "flowassoc/core.hpp"

namespace flowassoc::kalman {

inline constexpr int kStateDim = 10;
inline constexpr int kMeasDim = 5;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using Measurement = Eigen::Matrix<double, kMeasDim, 1>;  // [cx, cy, w, h, d]

/// Constant-velocity model over [cx, cy, w, h, d] and their per-frame rates.
struct KalmanParams {
  // Process noise added per predict step.
  double q_position = 1.0;  // px^2
  double q_size = 1.0;      // px^2
  double q_distance = 0.25; // m^2
  double q_velocity = 0.01; // (unit/frame)^2, all rate components
  // Measurement noise. Distance uses the sensor's reported variance times
  // r_distance_scale.
  double r_position = 1.0;  // px^2
  double r_size = 1.0;      // px^2
  double r_distance_scale = 1.0;
  double init_velocity_var = 100.0;

  void validate() const;
};

struct KalmanState {
  StateVector mean = StateVector::Zero();
  StateMatrix covariance = StateMatrix::Identity();

  Measurement measurement() const { return mean.head<kMeasDim>(); }
  BBox bbox() const { return {mean(0), mean(1), mean(2), mean(3)}; }
  double distance() const { return mean(4); }
  double distance_var() const { return covariance(4, 4); }
};

Measurement to_measurement(const Detection& det);

KalmanState kf_init(const Detection& det, const KalmanParams& params);

struct Prediction {
  KalmanState state;
  Measurement predicted;
};

Prediction kf_predict(const KalmanState& state, const KalmanParams& params);

/// Joseph-form update; throws NumericalError when the innovation covariance
/// is not positive definite or the result is non-finite.
KalmanState kf_update(const KalmanState& state, const Measurement& z, double z_dist_var, const KalmanParams& params);

}  // namespace flowassoc::kalman
