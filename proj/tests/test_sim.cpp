#include <doctest.h>

#include <cmath>
#include <map>

#include "flowassoc/errors.hpp"
#include "flowassoc/metrics.hpp"
#include "flowassoc/sim.hpp"

using namespace flowassoc;
using namespace flowassoc::sim;

namespace {

Camera level_camera() {
  Camera c;
  c.center = Eigen::Vector3d::Zero();
  return c;
}

ScenarioConfig clean_config() {
  ScenarioConfig c;
  c.frames = 40;
  c.heading_noise = 0.0;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("projection") {
    const Camera cam = level_camera();
    const auto p = project(cam, {0.0, 0.0, 10.0});
    REQUIRE(p);
    CHECK(p->u == 960.0);
    CHECK(p->v == 540.0);
    CHECK(p->distance == 10.0);

    const auto q = project(cam, {1.0, 0.0, 5.0});
    CHECK(q->u - 960.0 == doctest::Approx(200.0).epsilon(1e-12));
    const auto q2 = project(cam, {1.0, 0.0, 10.0});
    CHECK(q2->u - 960.0 == doctest::Approx(0.5 * (q->u - 960.0)).epsilon(1e-12));

    CHECK_FALSE(project(cam, {0.0, 0.0, -1.0}));
    CHECK_FALSE(project(cam, {0.0, 0.0, 0.0}));
  }

  TEST_CASE("pitch tilts the ground down in the image") {
    Camera cam = level_camera();
    cam.center = {0.0, -3.0, 0.0};
    cam.pitch = 0.2;
    const auto ground = project(cam, {0.0, 0.0, 10.0});
    cam.pitch = 0.0;
    const auto flat = project(cam, {0.0, 0.0, 10.0});
    CHECK(ground->v < flat->v);
    CHECK(ground->distance == doctest::Approx(std::sqrt(109.0)));
  }

  TEST_CASE("generation is deterministic") {
    const ScenarioConfig c = preset("moderate");
    const Scenario a = generate_scenario(c);
    const Scenario b = generate_scenario(c);
    REQUIRE(a.pedestrians.size() == b.pedestrians.size());
    for (std::size_t k = 0; k < a.pedestrians.size(); ++k) {
      CHECK(a.pedestrians[k].root == b.pedestrians[k].root);
      CHECK(a.pedestrians[k].active == b.pedestrians[k].active);
    }
    const auto ra = render_detections(a), rb = render_detections(b);
    REQUIRE(ra.frames.size() == rb.frames.size());
    for (std::size_t t = 0; t < ra.frames.size(); ++t) {
      REQUIRE(ra.frames[t].detections.size() == rb.frames[t].detections.size());
      for (std::size_t j = 0; j < ra.frames[t].detections.size(); ++j) {
        CHECK(ra.frames[t].detections[j].bbox == rb.frames[t].detections[j].bbox);
        CHECK(ra.frames[t].detections[j].dist_mean == rb.frames[t].detections[j].dist_mean);
      }
    }
  }

  TEST_CASE("noiseless single pedestrian walks a straight line") {
    ScenarioConfig c = clean_config();
    c.min_pedestrians = c.max_pedestrians = 1;
    c.frames = 10;  // 1 m of walking, shorter than the waypoint distance
    c.late_spawn_fraction = c.early_leave_fraction = 0.0;
    const Scenario s = generate_scenario(c);
    const auto& r = s.pedestrians.at(0).root;
    const Eigen::Vector3d dir = (r.back() - r.front()).normalized();
    for (const auto& p : r) {
      const Eigen::Vector3d off = p - r.front();
      CHECK((off - off.dot(dir) * dir).norm() < 1e-9);
    }
  }

  TEST_CASE("pedestrian count contract") {
    ScenarioConfig c = clean_config();
    c.min_pedestrians = c.max_pedestrians = 10;
    CHECK(generate_scenario(c).pedestrians.size() == 10);
  }

  TEST_CASE("noiseless sensor reproduces ground truth") {
    ScenarioConfig c = clean_config();
    const auto r = render_detections(generate_scenario(c));
    std::size_t n_det = 0;
    for (const auto& fo : r.frames) n_det += fo.detections.size();
    REQUIRE(n_det == r.ground_truth.size());
    std::size_t k = 0;
    for (const auto& fo : r.frames) {
      for (const auto& d : fo.detections) {
        const auto& g = r.ground_truth[k++];
        CHECK(d.frame == g.frame);
        CHECK(d.gt_id == g.id);
        CHECK(d.bbox == g.bbox);
        CHECK(d.dist_mean == g.distance);
      }
    }
  }

  TEST_CASE("certain misses leave only false positives") {
    ScenarioConfig c = clean_config();
    c.miss_base = 1.0;
    c.fp_rate = 0.5;
    const auto r = render_detections(generate_scenario(c));
    CHECK_FALSE(r.ground_truth.empty());
    for (const auto& fo : r.frames)
      for (const auto& d : fo.detections) CHECK_FALSE(d.gt_id.has_value());
  }

  TEST_CASE("matched sensor noise has the analytic GNLL and coverage") {
    ScenarioConfig c = clean_config();
    c.frames = 300;
    c.min_pedestrians = c.max_pedestrians = 40;
    c.dist_noise = 0.5;
    const auto r = render_detections(generate_scenario(c));
    std::map<std::pair<int, int>, double> truth;
    for (const auto& g : r.ground_truth) truth[{g.frame, g.id}] = g.distance;
    double sum = 0.0;
    long n = 0, inside = 0;
    for (const auto& fo : r.frames) {
      for (const auto& d : fo.detections) {
        const double t = truth.at({d.frame, *d.gt_id});
        sum += metrics::gnll(d.dist_mean, d.dist_var, t);
        inside += std::abs(d.dist_mean - t) <= 1.959963984540054 * std::sqrt(d.dist_var);
        ++n;
      }
    }
    REQUIRE(n >= 10000);
    CHECK(std::abs(sum / n - 0.5 * (std::log(0.25) + 1.0)) < 0.02);
    const double cov = static_cast<double>(inside) / n;
    CHECK(cov >= 0.93);
    CHECK(cov <= 0.97);
  }

  TEST_CASE("ground-truth distance bypass") {
    ScenarioConfig c = preset("easy");
    c.frames = 30;
    const auto r = render_detections(generate_scenario(c));
    const auto frames = with_ground_truth_distances(r.frames, r.ground_truth);
    std::map<std::pair<int, int>, double> truth;
    for (const auto& g : r.ground_truth) truth[{g.frame, g.id}] = g.distance;
    int checked = 0;
    for (const auto& fo : frames) {
      for (const auto& d : fo.detections) {
        if (!d.gt_id) continue;
        CHECK(d.dist_mean == truth.at({d.frame, *d.gt_id}));
        ++checked;
      }
    }
    CHECK(checked > 0);
  }

  TEST_CASE("eval filters") {
    std::vector<GroundTruthRow> gt;
    for (int t = 0; t < 5; ++t) gt.push_back({t, 1, {}, t == 4 ? 80.0 : 10.0, t >= 1 && t <= 3 ? 1.0 : 0.0, true});
    apply_eval_filters(gt, 70.0, 2, 0.95);
    CHECK(gt[0].consider);
    CHECK(gt[1].consider);
    CHECK(gt[2].consider);
    CHECK_FALSE(gt[3].consider);  // third consecutive hidden frame
    CHECK_FALSE(gt[4].consider);  // too far
  }

  TEST_CASE("presets and suites") {
    for (const auto& n : preset_names()) CHECK_NOTHROW(preset(n).validate());
    CHECK_THROWS_AS(preset("nope"), ConfigError);
    const auto a = make_suite(preset("hard"), 3, 5);
    const auto b = make_suite(preset("hard"), 3, 5);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a[i].seed == b[i].seed);
      CHECK(a[i].camera.pitch == b[i].camera.pitch);
    }
    CHECK(a[0].seed != a[1].seed);
  }

  TEST_CASE("config validation") {
    ScenarioConfig c;
    c.miss_base = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = ScenarioConfig{};
    c.frames = 0;
    CHECK_THROWS_AS(generate_scenario(c), InvalidArgument);
  }
}
