#include <doctest.h>

#include <limits>

#include "flowassoc/context.hpp"
#include "flowassoc/errors.hpp"
#include "test_util.hpp"

using namespace flowassoc;
using namespace flowassoc::context;
using testutil::random_window;

namespace {

struct Encoder {
  ParamStore store;
  EncoderLayout layout;
  std::vector<double> scale = std::vector<double>(kStepDim, 1.0);

  Encoder() {
    EncoderDims d;
    d.gru_hidden = 6;
    d.embed_dim = 3;
    d.clusters = 4;
    d.out_dim = 5;
    layout = add_encoder_params(store, d);
    Rng rng(21);
    for (auto& v : store.values()) v = normal(rng, 0.0, 0.4);
  }
  std::vector<double> run(const TrackWindow& w, int cluster, bool use_scene) const {
    return encode_reference(store, layout, w, cluster, use_scene, scale);
  }
};

}  // namespace

TEST_SUITE("context") {
  TEST_CASE("stationary track gives zero displacements") {
    std::vector<Observation> h(12, Observation{100, 50, 20, 40, 10});
    const auto w = build_window(h);
    CHECK(w.valid_count() == kWindowLength);
    for (const auto& s : w.steps)
      for (double v : s) CHECK(v == 0.0);
  }

  TEST_CASE("short histories are front padded") {
    std::vector<Observation> h{{0, 0, 1, 1, 1}, {3, 0, 1, 1, 1}};
    const auto w = build_window(h);
    CHECK(w.valid_count() == 1);
    CHECK(w.valid[kWindowLength - 1]);
    CHECK_FALSE(w.valid[0]);
    CHECK(w.steps[kWindowLength - 1][0] == 3.0);
    CHECK(w.steps[0][0] == 0.0);
    CHECK(build_window(std::span<const Observation>(h.data(), 1)).valid_count() == 0);
    CHECK_THROWS_AS(build_window({}), InvalidArgument);
  }

  TEST_CASE("constant motion") {
    std::vector<Observation> h;
    for (int t = 0; t < 20; ++t) h.push_back({3.0 * t, 7.0, 20, 40, 10});
    const auto w = build_window(h);
    for (int s = 0; s < kWindowLength; ++s) {
      CHECK(w.valid[s]);
      CHECK(w.steps[s][0] == 3.0);
      CHECK(w.steps[s][1] == 0.0);
    }
  }

  TEST_CASE("kmeans recovers separated cloud means") {
    Rng rng(3);
    std::vector<std::vector<double>> pts;
    std::vector<double> m0(2, 0.0), m1(2, 0.0);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> a{normal(rng, 0.0, 0.1), normal(rng, 0.0, 0.1)};
      std::vector<double> b{normal(rng, 10.0, 0.1), normal(rng, 5.0, 0.1)};
      for (int j = 0; j < 2; ++j) {
        m0[j] += a[j] / 50;
        m1[j] += b[j] / 50;
      }
      pts.push_back(a);
      pts.push_back(b);
    }
    const auto model = kmeans_fit(pts, 2, 7);
    auto c0 = model.centroid(0), c1 = model.centroid(1);
    if (c0[0] > c1[0]) std::swap(c0, c1);
    for (int j = 0; j < 2; ++j) {
      CHECK(c0[j] == doctest::Approx(m0[j]).epsilon(1e-9));
      CHECK(c1[j] == doctest::Approx(m1[j]).epsilon(1e-9));
    }
    for (std::size_t i = 1; i < model.sse_history.size(); ++i) CHECK(model.sse_history[i] <= model.sse_history[i - 1] + 1e-12);
  }

  TEST_CASE("k equal to the number of distinct points") {
    std::vector<std::vector<double>> pts{{0, 0}, {1, 5}, {3, 2}, {1, 5}};
    const auto model = kmeans_fit(pts, 3, 1);
    for (const auto& p : pts) {
      const auto c = model.centroid(assign_cluster(p, model));
      CHECK(c[0] == doctest::Approx(p[0]).epsilon(1e-12));
      CHECK(c[1] == doctest::Approx(p[1]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(kmeans_fit(pts, 4, 1), InvalidArgument);
  }

  TEST_CASE("kmeans is deterministic") {
    Rng rng(8);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 60; ++i) pts.push_back({normal(rng), normal(rng), normal(rng)});
    const auto a = kmeans_fit(pts, 5, 99), b = kmeans_fit(pts, 5, 99);
    CHECK(a.centroids == b.centroids);
  }

  TEST_CASE("assign_cluster") {
    SceneClusterModel m;
    m.mean = {0.0, 0.0};
    m.stddev = {1.0, 1.0};
    m.centroids.resize(2, 3);
    m.centroids << 0.0, 2.0, 0.0,  //
        0.0, 0.0, 3.0;
    for (int i = 0; i < 3; ++i) CHECK(assign_cluster(m.centroid(i), m) == i);
    CHECK(assign_cluster(std::vector<double>{1.0, 0.0}, m) == 0);  // exact tie

    Rng rng(2);
    for (int t = 0; t < 3; ++t) {
      const std::vector<double> p{uniform(rng, -1, 3), uniform(rng, -1, 4)};
      int best = -1;
      double bd = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i) {
        const double d = std::pow(p[0] - m.centroids(0, i), 2) + std::pow(p[1] - m.centroids(1, i), 2);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      CHECK(assign_cluster(p, m) == best);
    }
  }

  TEST_CASE("encoder determinism and scene switch") {
    const Encoder e;
    Rng rng(4);
    const auto w = random_window(rng);
    CHECK(e.run(w, 1, true) == e.run(w, 1, true));
    CHECK(e.run(w, 1, true) != e.run(w, 2, true));
    CHECK(e.run(w, 1, false) == e.run(w, 2, false));
    CHECK(e.run(w, -1, true) == e.run(w, 3, false));
  }

  TEST_CASE("padded steps do not matter") {
    const Encoder e;
    std::vector<Observation> h{{0, 0, 20, 40, 10}, {2, 1, 20, 40, 10}, {4, 2, 21, 40, 9.5}};
    auto w = build_window(h);
    const auto ref = e.run(w, 0, true);
    w.steps[0] = {50, -20, 3, 4, 1};
    CHECK(e.run(w, 0, true) == ref);
  }

  TEST_CASE("batched encoder matches the reference") {
    const Encoder e;
    Rng rng(6);
    std::vector<TrackWindow> ws;
    std::vector<int> cl;
    for (int k = 0; k < 70; ++k) {
      ws.push_back(random_window(rng));
      cl.push_back(k % 5 - 1);
    }
    const Eigen::MatrixXd out = encode_batch(e.store, e.layout, ws, cl, true, e.scale, nullptr);
    for (int k = 0; k < 70; ++k) {
      const auto r = e.run(ws[k], cl[k], true);
      for (int c = 0; c < 5; ++c) CHECK(out(c, k) == doctest::Approx(r[c]).epsilon(1e-12));
    }
  }
}
