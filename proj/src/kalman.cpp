#include "flowassoc/kalman.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "flowassoc/errors.hpp"

namespace flowassoc::kalman {

namespace {

constexpr double kMinExtent = 1e-3;

StateMatrix transition() {
  StateMatrix f = StateMatrix::Identity();
  f.topRightCorner<kMeasDim, kMeasDim>().setIdentity();
  return f;
}

void clamp_positive(StateVector& x) {
  for (int i = 2; i < kMeasDim; ++i) x(i) = std::max(x(i), kMinExtent);
}

}  // namespace

void KalmanParams::validate() const {
  if (!(q_position > 0 && q_size > 0 && q_distance > 0 && q_velocity > 0 && r_position > 0 && r_size > 0 &&
        r_distance_scale > 0 && init_velocity_var > 0)) {
    throw InvalidArgument("Kalman noise parameters must all be > 0");
  }
}

Measurement to_measurement(const Detection& det) {
  Measurement z;
  z << det.bbox.cx, det.bbox.cy, det.bbox.w, det.bbox.h, det.dist_mean;
  return z;
}

KalmanState kf_init(const Detection& det, const KalmanParams& params) {
  KalmanState s;
  s.mean.head<kMeasDim>() = to_measurement(det);
  s.mean.tail<kMeasDim>().setZero();
  StateVector diag;
  diag << params.r_position, params.r_position, params.r_size, params.r_size,
      det.dist_var * params.r_distance_scale, params.init_velocity_var, params.init_velocity_var,
      params.init_velocity_var, params.init_velocity_var, params.init_velocity_var;
  s.covariance = diag.asDiagonal();
  return s;
}

Prediction kf_predict(const KalmanState& state, const KalmanParams& params) {
  static const StateMatrix f = transition();
  StateVector q;
  q << params.q_position, params.q_position, params.q_size, params.q_size, params.q_distance, params.q_velocity,
      params.q_velocity, params.q_velocity, params.q_velocity, params.q_velocity;
  Prediction p;
  p.state.mean = f * state.mean;
  clamp_positive(p.state.mean);
  StateMatrix cov = f * state.covariance * f.transpose();
  cov.diagonal() += q;
  p.state.covariance = 0.5 * (cov + cov.transpose());
  p.predicted = p.state.mean.head<kMeasDim>();
  return p;
}

KalmanState kf_update(const KalmanState& state, const Measurement& z, double z_dist_var, const KalmanParams& params) {
  using HMatrix = Eigen::Matrix<double, kMeasDim, kStateDim>;
  using MeasMatrix = Eigen::Matrix<double, kMeasDim, kMeasDim>;
  HMatrix h = HMatrix::Zero();
  h.leftCols<kMeasDim>().setIdentity();

  Measurement rdiag;
  rdiag << params.r_position, params.r_position, params.r_size, params.r_size, z_dist_var * params.r_distance_scale;
  const MeasMatrix r = rdiag.asDiagonal();

  const MeasMatrix s = h * state.covariance * h.transpose() + r;
  Eigen::LLT<MeasMatrix> llt(s);
  if (llt.info() != Eigen::Success || !s.allFinite()) {
    throw NumericalError("kalman update", "innovation covariance is not positive definite");
  }
  const Eigen::Matrix<double, kStateDim, kMeasDim> pht = state.covariance * h.transpose();
  const Eigen::Matrix<double, kStateDim, kMeasDim> k = llt.solve(pht.transpose()).transpose();

  KalmanState out;
  out.mean = state.mean + k * (z - h * state.mean);
  clamp_positive(out.mean);
  const StateMatrix ikh = StateMatrix::Identity() - k * h;
  const StateMatrix cov = ikh * state.covariance * ikh.transpose() + k * r * k.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  if (!out.mean.allFinite() || !out.covariance.allFinite()) {
    throw NumericalError("kalman update", "non-finite posterior");
  }
  return out;
}

}  // namespace flowassoc::kalman
