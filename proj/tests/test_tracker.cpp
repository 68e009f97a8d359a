#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "flowassoc/errors.hpp"
#include "flowassoc/experiment.hpp"
#include "flowassoc/metrics.hpp"
#include "flowassoc/tracker.hpp"

using namespace flowassoc;
using namespace flowassoc::tracker;

namespace {

Detection box(int frame, double cx, double cy, double d, int id, double conf = 0.9) {
  Detection x;
  x.frame = frame;
  x.bbox = {cx, cy, 40, 100};
  x.dist_mean = d;
  x.dist_var = 1e-4;
  x.confidence = conf;
  x.gt_id = id;
  return x;
}

std::vector<FrameObservations> empty_frames(int n) {
  std::vector<FrameObservations> f(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) f[static_cast<std::size_t>(t)].frame = t;
  return f;
}

std::vector<sim::GroundTruthRow> truth_of(const std::vector<FrameObservations>& frames) {
  std::vector<sim::GroundTruthRow> gt;
  for (const auto& fo : frames)
    for (const auto& d : fo.detections)
      if (d.gt_id) gt.push_back({fo.frame, *d.gt_id, d.bbox, d.dist_mean, 0.0, true});
  return gt;
}

/// Output id per (frame, gt id), by exact box equality.
std::map<std::pair<int, int>, int> ids_by_truth(const std::vector<FrameObservations>& frames, const TrackOutput& out) {
  std::map<std::pair<int, int>, int> m;
  for (const auto& r : out.rows) {
    for (const auto& d : frames[static_cast<std::size_t>(r.frame)].detections) {
      if (d.gt_id && std::abs(d.bbox.cx - r.bbox.cx) < 1.0) m[{r.frame, *d.gt_id}] = r.id;
    }
  }
  return m;
}

sim::ScenarioConfig clean_scene(std::uint64_t seed) {
  sim::ScenarioConfig c;
  c.min_pedestrians = c.max_pedestrians = 2;
  c.frames = 120;
  c.heading_noise = 0.0;
  c.seed = seed;
  return c;
}

/// A small flow trained once on sensor-distance data.
const experiment::TrainedModel& test_flow() {
  static const experiment::TrainedModel m = [] {
    auto base = sim::preset("easy");
    base.frame_rate = 10.0;
    const auto seqs = experiment::simulate_all(sim::make_suite(base, 6, 4));
    flow::FlowConfig fc;
    fc.blocks = 4;
    fc.hidden = 32;
    fc.epochs = 10;
    fc.batch_size = 256;
    fc.seed = 2;
    return experiment::train_model(seqs, fc, TrackerParams{}, experiment::ModelKind::joint);
  }();
  return m;
}

}  // namespace

TEST_SUITE("tracker") {
  TEST_CASE("noiseless input gives perfect identities") {
    // Only scenes whose boxes never touch are unambiguous.
    int used = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto seq = experiment::simulate_sequence(clean_scene(seed));
      std::map<int, std::vector<BBox>> per_frame;
      for (const auto& g : seq.data.ground_truth) per_frame[g.frame].push_back(g.bbox);
      bool separated = true;
      for (const auto& [f, boxes] : per_frame)
        for (std::size_t a = 0; a < boxes.size(); ++a)
          for (std::size_t b = a + 1; b < boxes.size(); ++b) separated &= intersection_area(boxes[a], boxes[b]) == 0.0;
      if (!separated) continue;
      ++used;
      const std::vector<assoc::CostProvider> providers{assoc::CostProvider::iou(), assoc::CostProvider::euclidean(),
                                                        test_flow().provider()};
      for (const auto& provider : providers) {
        INFO("seed " << seed << " provider " << assoc::to_string(provider.kind()));
        // The learned threshold rejects a fixed tail share of true matches, so
        // the flow run relies on the gate alone.
        TrackerParams p;
        if (provider.uses_distance()) {
          p.assoc.negate = true;
          p.assoc.accept_cost = 1e300;
        }
        const auto out = track_sequence(seq.data.frames, provider, p, seq.data.descriptor);
        const auto ev = metrics::evaluate_tracking(seq.data.ground_truth, out.rows);
        CHECK(ev.counts.idf1().value() == doctest::Approx(1.0));
        CHECK(ev.counts.idsw == 0);
        CHECK(ev.counts.mota().value() == doctest::Approx(1.0));
      }
    }
    CHECK(used >= 3);
  }

  TEST_CASE("retired tracks do not come back") {
    TrackerParams p;
    p.max_age = 3;
    auto frames = empty_frames(20);
    for (int t = 0; t < 20; ++t) {
      if (t < 6 || t >= 10) frames[t].detections.push_back(box(t, 100 + t, 200, 10, 1));
    }
    auto out = track_sequence(frames, assoc::CostProvider::iou(), p);
    std::set<int> early, late;
    for (const auto& r : out.rows) (r.frame < 6 ? early : late).insert(r.id);
    CHECK(early.size() == 1);
    CHECK(late.size() == 1);
    CHECK(*early.begin() != *late.begin());

    // A gap of exactly max_age frames keeps the id.
    frames = empty_frames(20);
    for (int t = 0; t < 20; ++t) {
      if (t < 6 || t >= 9) frames[t].detections.push_back(box(t, 100 + t, 200, 10, 1));
    }
    out = track_sequence(frames, assoc::CostProvider::iou(), p);
    std::set<int> ids;
    for (const auto& r : out.rows) ids.insert(r.id);
    CHECK(ids.size() == 1);
  }

  TEST_CASE("tentative tracks are emitted once confirmed") {
    TrackerParams p;
    auto frames = empty_frames(5);
    for (int t = 0; t < 2; ++t) frames[t].detections.push_back(box(t, 100, 200, 10, 1));
    CHECK(track_sequence(frames, assoc::CostProvider::iou(), p).rows.empty());
    frames[2].detections.push_back(box(2, 100, 200, 10, 1));
    const auto out = track_sequence(frames, assoc::CostProvider::iou(), p);
    REQUIRE(out.rows.size() == 3);
    CHECK(out.rows[0].frame == 0);
  }

  TEST_CASE("distance keeps identities where overlap swaps them") {
    // Equal boxes meet at the same image position 5 m apart in depth and
    // walk back the way they came.
    auto frames = empty_frames(40);
    for (int t = 0; t < 40; ++t) {
      const double off = t <= 20 ? 1.0 * t : 40.0 - 1.0 * t;
      frames[t].detections.push_back(box(t, 200 + off, 300, 15.0, 1));
      frames[t].detections.push_back(box(t, 240 - off, 300, 20.0, 2));
    }
    const auto gt = truth_of(frames);
    const auto flow_out = track_sequence(frames, test_flow().provider(), TrackerParams{});
    const auto iou_out = track_sequence(frames, assoc::CostProvider::iou(), TrackerParams{});
    const auto fe = metrics::evaluate_tracking(gt, flow_out.rows);
    const auto ie = metrics::evaluate_tracking(gt, iou_out.rows);
    CHECK(fe.counts.idsw == 0);
    CHECK(fe.counts.idf1().value() == doctest::Approx(1.0));
    CHECK(ie.counts.idsw > 0);
    CHECK(ie.counts.idf1().value() < 0.9);

    const auto flow_ids = ids_by_truth(frames, flow_out);
    CHECK(flow_ids.at({5, 1}) == flow_ids.at({35, 1}));
    const auto iou_ids = ids_by_truth(frames, iou_out);
    CHECK(iou_ids.at({5, 1}) == iou_ids.at({35, 2}));
  }

  TEST_CASE("two-stage matching") {
    auto frames = empty_frames(40);
    for (int t = 0; t < 40; ++t) {
      const double conf = t >= 10 && t < 25 ? 0.3 : 0.9;
      frames[t].detections.push_back(box(t, 100 + 2 * t, 200, 10, 1, conf));
      frames[t].detections.push_back(box(t, 600 - 2 * t, 200, 10, 2));
    }
    TrackerParams single;
    single.max_age = 5;
    TrackerParams dual = single;
    dual.two_stage = true;
    const auto a = track_sequence(frames, assoc::CostProvider::iou(), single);
    const auto b = track_sequence(frames, assoc::CostProvider::iou(), dual);
    std::set<int> ids_a, ids_b;
    int rows_a = 0, rows_b = 0;
    for (const auto& r : a.rows)
      if (r.bbox.cx < 350) ids_a.insert(r.id), ++rows_a;
    for (const auto& r : b.rows)
      if (r.bbox.cx < 350) ids_b.insert(r.id), ++rows_b;
    CHECK(ids_a.size() == 2);
    CHECK(ids_b.size() == 1);
    CHECK(rows_b == 40);
    bool second_stage = false;
    for (const auto& e : b.log) second_stage |= e.stage == 2;
    CHECK(second_stage);

    // Without low-confidence detections both modes agree.
    for (auto& fo : frames)
      for (auto& d : fo.detections) d.confidence = 0.9;
    const auto c = track_sequence(frames, assoc::CostProvider::iou(), single);
    const auto e = track_sequence(frames, assoc::CostProvider::iou(), dual);
    REQUIRE(c.rows.size() == e.rows.size());
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      CHECK(c.rows[k].id == e.rows[k].id);
      CHECK(c.rows[k].bbox == e.rows[k].bbox);
    }
    CHECK(format_match_log(c.log) == format_match_log(e.log));
  }

  TEST_CASE("tracking is deterministic") {
    const auto seq = experiment::simulate_sequence(sim::make_suite(sim::preset("moderate"), 1, 3)[0]);
    const auto a = track_sequence(seq.data.frames, test_flow().provider(), TrackerParams{}, seq.data.descriptor);
    const auto b = track_sequence(seq.data.frames, test_flow().provider(), TrackerParams{}, seq.data.descriptor);
    CHECK(format_match_log(a.log) == format_match_log(b.log));
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].bbox == b.rows[k].bbox);
  }

  TEST_CASE("inlier deltas vanish for exact motion") {
    sim::ScenarioConfig c = clean_scene(5);
    c.speed_min = c.speed_max = 0.0;
    const auto seq = experiment::simulate_sequence(c);
    std::vector<LabeledSequence> data{seq.data};
    const auto b = build_inlier_dataset(data, TrackerParams{}, {});
    REQUIRE(b.size() > 0);
    CHECK(b.x.cwiseAbs().maxCoeff() < 1e-6);

    // Constant velocity: the filter locks on and residuals decay.
    LabeledSequence cv;
    cv.frames = empty_frames(150);
    for (int t = 0; t < 150; ++t) {
      cv.frames[t].detections.push_back(box(t, 100 + 3.0 * t, 200 + 0.5 * t, 12.0 + 0.01 * t, 1));
      cv.ground_truth.push_back({t, 1, cv.frames[t].detections[0].bbox, 12.0 + 0.01 * t, 0.0, true});
    }
    std::vector<LabeledSequence> one{cv};
    const auto bc = build_inlier_dataset(one, TrackerParams{}, {});
    REQUIRE(bc.size() == 148);
    CHECK(bc.x.rightCols(20).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("inlier sample count") {
    sim::ScenarioConfig c = clean_scene(6);
    const auto seq = experiment::simulate_sequence(c);
    for (int h : {1, 2, 4}) {
      InlierOptions opt;
      opt.min_history = h;
      opt.max_gap = 1000;
      std::vector<LabeledSequence> data{seq.data};
      std::map<int, long> span;
      for (const auto& g : seq.data.ground_truth) ++span[g.id];
      long expected = 0;
      for (const auto& [id, n] : span) expected += std::max<long>(0, n - h);
      CHECK(static_cast<long>(build_inlier_dataset(data, TrackerParams{}, opt).size()) == expected);
    }
  }

  TEST_CASE("inlier residuals carry the box jitter") {
    auto cfg = sim::preset("easy");
    cfg.box_jitter = 2.0;
    cfg.seed = 8;
    std::vector<LabeledSequence> data;
    for (const auto& c : sim::make_suite(cfg, 3, 8)) {
      auto c2 = c;
      c2.box_jitter = 2.0;
      data.push_back(experiment::simulate_sequence(c2).data);
    }
    const auto b = build_inlier_dataset(data, TrackerParams{}, {});
    REQUIRE(b.size() > 1000);
    const Eigen::VectorXd dx = b.x.row(0).transpose();
    const double mean = dx.mean();
    const double sd = std::sqrt((dx.array() - mean).square().sum() / static_cast<double>(dx.size() - 1));
    CHECK(sd >= 1.5);
    CHECK(sd <= 3.5);
  }

  TEST_CASE("parameter validation") {
    TrackerParams p;
    p.n_init = 0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = TrackerParams{};
    p.two_stage = true;
    p.low_threshold = 0.9;
    CHECK_THROWS_AS(track_sequence(empty_frames(2), assoc::CostProvider::iou(), p), InvalidArgument);
    auto frames = empty_frames(3);
    frames[2].frame = 1;
    CHECK_THROWS_AS(track_sequence(frames, assoc::CostProvider::iou(), TrackerParams{}), InvalidArgument);
  }
}
