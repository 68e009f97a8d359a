#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "flowassoc/errors.hpp"
#include "flowassoc/kalman.hpp"

using namespace flowassoc;
using namespace flowassoc::kalman;

namespace {

Detection det(double cx, double cy, double w, double h, double d, double var = 0.25) {
  Detection x;
  x.bbox = {cx, cy, w, h};
  x.dist_mean = d;
  x.dist_var = var;
  return x;
}

// Position-velocity filter written out by hand: state (p, v), F = [[1,1],[0,1]],
// Q = diag(qp, qv), H = [1, 0], scalar R.
struct Filter1D {
  double p, v, pp, pv, vv;  // mean and covariance entries
  void predict(double qp, double qv) {
    p += v;
    const double npp = pp + 2 * pv + vv + qp;
    const double npv = pv + vv;
    const double nvv = vv + qv;
    pp = npp;
    pv = npv;
    vv = nvv;
  }
  void update(double z, double r) {
    const double s = pp + r;
    const double k0 = pp / s, k1 = pv / s;
    const double innov = z - p;
    p += k0 * innov;
    v += k1 * innov;
    // Joseph form reduces to (I - K H) P for the optimal gain.
    const double npp = (1 - k0) * pp;
    const double npv = (1 - k0) * pv;
    const double nvv = vv - k1 * pv;
    pp = npp;
    pv = npv;
    vv = nvv;
  }
};

}  // namespace

TEST_SUITE("kalman") {
  TEST_CASE("init then predict keeps the detection") {
    KalmanParams kp;
    const Detection d = det(100, 200, 40, 90, 12);
    const auto s = kf_init(d, kp);
    CHECK(s.covariance.isDiagonal());
    CHECK(s.covariance.diagonal().minCoeff() > 0.0);
    const auto p = kf_predict(s, kp);
    CHECK((p.predicted - to_measurement(d)).norm() == 0.0);
    const auto s2 = kf_init(d, kp);
    CHECK(s2.mean == s.mean);
    CHECK(s2.covariance == s.covariance);
  }

  TEST_CASE("constant velocity prediction") {
    KalmanParams kp;
    auto s = kf_init(det(100, 200, 40, 90, 12), kp);
    s.mean(5) = 3.0;
    const auto p = kf_predict(s, kp);
    CHECK(p.predicted(0) == 103.0);
    CHECK(p.predicted(1) == 200.0);
  }

  TEST_CASE("zero innovation leaves the mean") {
    KalmanParams kp;
    auto s = kf_predict(kf_init(det(100, 200, 40, 90, 12), kp), kp).state;
    const auto u = kf_update(s, s.measurement(), 0.25, kp);
    CHECK((u.mean - s.mean).norm() < 1e-12);
  }

  TEST_CASE("perfect sensor pulls the mean onto the measurement") {
    KalmanParams kp;
    kp.r_position = kp.r_size = 1e-8;
    auto s = kf_predict(kf_init(det(100, 200, 40, 90, 12), kp), kp).state;
    Measurement z;
    z << 110, 195, 42, 88, 13;
    const auto u = kf_update(s, z, 1e-8, kp);
    CHECK((u.measurement() - z).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("consistent measurements shrink the covariance") {
    KalmanParams kp;
    kp.q_position = kp.q_size = kp.q_distance = kp.q_velocity = 1e-12;
    auto s = kf_init(det(100, 200, 40, 90, 12), kp);
    double prev = s.covariance.trace();
    for (int t = 1; t < 30; ++t) {
      s = kf_predict(s, kp).state;
      s = kf_update(s, to_measurement(det(100, 200, 40, 90, 12)), 0.25, kp);
      CHECK(s.covariance.trace() <= prev + 1e-9);
      prev = s.covariance.trace();
      Eigen::SelfAdjointEigenSolver<StateMatrix> es(s.covariance);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }

  TEST_CASE("each channel matches a hand-written 1D filter") {
    KalmanParams kp;
    kp.q_position = 0.7;
    kp.q_velocity = 0.05;
    kp.r_position = 2.0;
    kp.init_velocity_var = 10.0;
    const double zs[] = {100.0, 103.5, 105.0, 109.25};
    auto s = kf_init(det(zs[0], 50, 40, 90, 12), kp);
    Filter1D f{zs[0], 0.0, kp.r_position, 0.0, kp.init_velocity_var};
    for (int t = 1; t < 4; ++t) {
      s = kf_predict(s, kp).state;
      f.predict(kp.q_position, kp.q_velocity);
      CHECK(s.mean(0) == doctest::Approx(f.p).epsilon(1e-12));
      CHECK(s.covariance(0, 0) == doctest::Approx(f.pp).epsilon(1e-12));
      s = kf_update(s, to_measurement(det(zs[t], 50, 40, 90, 12)), 0.25, kp);
      f.update(zs[t], kp.r_position);
    }
    CHECK(s.mean(0) == doctest::Approx(f.p).epsilon(1e-12));
    CHECK(s.mean(5) == doctest::Approx(f.v).epsilon(1e-12));
    CHECK(s.covariance(0, 0) == doctest::Approx(f.pp).epsilon(1e-12));
    CHECK(s.covariance(0, 5) == doctest::Approx(f.pv).epsilon(1e-12));
    CHECK(s.covariance(5, 5) == doctest::Approx(f.vv).epsilon(1e-12));
    CHECK(s.covariance(0, 1) == 0.0);
  }

  TEST_CASE("distance update uses the reported variance") {
    KalmanParams kp;
    auto s = kf_predict(kf_init(det(100, 200, 40, 90, 10, 1.0), kp), kp).state;
    Measurement z = s.measurement();
    z(4) = 12.0;
    const auto tight = kf_update(s, z, 0.01, kp);
    const auto loose = kf_update(s, z, 100.0, kp);
    CHECK(std::abs(tight.distance() - 12.0) < std::abs(loose.distance() - 12.0));
  }

  TEST_CASE("failures") {
    KalmanParams kp;
    auto s = kf_init(det(100, 200, 40, 90, 12), kp);
    s.covariance(0, 0) = std::nan("");
    CHECK_THROWS_AS(kf_update(s, s.measurement(), 0.25, kp), NumericalError);
    kp.q_position = 0.0;
    CHECK_THROWS_AS(kp.validate(), InvalidArgument);
  }
}
