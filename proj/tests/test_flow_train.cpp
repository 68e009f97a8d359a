#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "flowassoc/errors.hpp"
#include "flowassoc/flow.hpp"
#include "test_util.hpp"

using namespace flowassoc;
using namespace flowassoc::flow;

namespace {

FlowBatch gaussian_2d(int n, std::uint64_t seed) {
  Rng rng(seed);
  FlowBatch b;
  b.x.resize(2, n);
  for (int j = 0; j < n; ++j) {
    const double a = normal(rng), c = normal(rng);
    b.x(0, j) = 3.0 + 2.0 * a;
    b.x(1, j) = -1.0 + 0.6 * a + 0.5 * c;
  }
  return b;
}

FlowConfig tiny(int dim) {
  FlowConfig c;
  c.input_dim = dim;
  c.blocks = 2;
  c.hidden = 16;
  c.context_dim = 0;
  c.batch_size = 128;
  c.epochs = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("flow_train") {
  TEST_CASE("standardization gives unit variance on training data") {
    const FlowBatch b = gaussian_2d(5000, 1);
    FlowModel m(tiny(2));
    fit_standardization(m, b);
    const auto& st = m.standardization();
    for (int i = 0; i < 2; ++i) {
      const Eigen::ArrayXd z = (b.x.row(i).array() - st.mean[i]) / st.stddev[i];
      const double var = (z - z.mean()).square().mean();
      CHECK(var > 0.9);
      CHECK(var < 1.1);
    }
  }

  TEST_CASE("constant dimensions keep unit scale") {
    FlowBatch b = gaussian_2d(100, 2);
    b.x.row(1).setConstant(4.0);
    FlowModel m(tiny(2));
    fit_standardization(m, b);
    CHECK(m.standardization().stddev[1] == 1.0);
    CHECK(m.standardization().mean[1] == 4.0);
  }

  TEST_CASE("actnorm initialization whitens each block's output") {
    const FlowBatch b = gaussian_2d(512, 3);
    FlowConfig c = tiny(2);
    c.blocks = 1;
    FlowModel m(c);
    m.randomize(7, 0.5);
    init_actnorm(m, b);
    Eigen::MatrixXd z(2, b.x.cols());
    for (int j = 0; j < b.x.cols(); ++j) {
      const Eigen::VectorXd col = b.x.col(j);
      const auto r = density_pass(m, std::span(col.data(), 2));
      z(0, j) = r.z0[0];
      z(1, j) = r.z0[1];
    }
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(z.row(i).mean()) < 1e-10);
      CHECK((z.row(i).array() - z.row(i).mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("split is deterministic, disjoint and holds out ten percent") {
    const auto [a, va] = split_indices(1000, 0.1, 9);
    const auto [b, vb] = split_indices(1000, 0.1, 9);
    CHECK(a == b);
    CHECK(va == vb);
    CHECK(va.size() == 100);
    std::set<std::size_t> all(a.begin(), a.end());
    for (auto v : va) CHECK(all.insert(v).second);
    CHECK(all.size() == 1000);
    CHECK(split_indices(1000, 0.1, 10).second != va);
  }

  TEST_CASE("training improves held-out NLL and is deterministic") {
    const FlowBatch b = gaussian_2d(3000, 4);
    const TrainResult r1 = train(b, tiny(2));
    const TrainResult r2 = train(b, tiny(2));
    CHECK(r1.trace.size() == 3);
    for (const auto& e : r1.trace) {
      CHECK(std::isfinite(e.train_nll));
      CHECK(std::isfinite(e.val_nll));
    }
    CHECK(r1.best_val_nll <= r1.init_val_nll);
    CHECK(r1.best_val_nll == r2.best_val_nll);
    CHECK(r1.model.same_parameters(r2.model));
    CHECK(std::isfinite(r1.model.accept_nll));
  }

  TEST_CASE("training preconditions") {
    CHECK_THROWS_AS(train(FlowBatch{Eigen::MatrixXd(2, 0), {}, {}}, tiny(2)), InvalidArgument);
    CHECK_THROWS_AS(train(gaussian_2d(100, 1), tiny(2)), InvalidArgument);  // smaller than the batch
  }

  TEST_CASE("factorized identity log-prob is a sum of standard normals") {
    FlowConfig c = tiny(5);
    const FactorizedModel m = factorized_identity(c);
    const std::vector<double> zero(5, 0.0);
    CHECK(factorized_log_prob(m, zero) == doctest::Approx(-2.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    FlowBatch b;
    b.x = Eigen::MatrixXd::Zero(5, 2);
    const Eigen::VectorXd lp = factorized_log_prob_batch(m, b);
    CHECK(lp[0] == doctest::Approx(factorized_log_prob(m, zero)).epsilon(1e-14));
  }

  TEST_CASE("factorized training shares the validation split") {
    Rng rng(8);
    FlowBatch b;
    b.x.resize(5, 2000);
    for (int j = 0; j < 2000; ++j)
      for (int i = 0; i < 5; ++i) b.x(i, j) = normal(rng, i, 1.0 + i);
    FlowConfig c = tiny(5);
    const auto r = factorized_train(b, c);
    double sum = 0.0;
    for (const auto& p : r.parts) sum += p.best_val_nll;
    CHECK(r.best_val_nll == doctest::Approx(sum));
    const auto val = split_indices(2000, c.validation_fraction, c.seed).second;
    const Eigen::VectorXd lp = factorized_log_prob_batch(r.model, b.subset(val));
    CHECK(-lp.mean() == doctest::Approx(r.best_val_nll).epsilon(1e-10));
  }
}
