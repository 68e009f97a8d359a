#include "flowassoc/tracker.hpp"

#include <algorithm>
#include <map>

#include "flowassoc/errors.hpp"
#include "flowassoc/mot_io.hpp"

namespace flowassoc::tracker {

namespace {

enum class Status { tentative, confirmed };

struct Track {
  int id = 0;
  Status status = Status::tentative;
  kalman::KalmanState state;
  kalman::Measurement predicted;
  int hits = 0;
  int misses = 0;
  double last_distance = 0.0;
  std::vector<context::Observation> history;
  std::vector<TrackRow> pending;  // rows held back while tentative
};

context::Observation observation(const Detection& d) {
  return {d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h, d.dist_mean};
}

int scene_cluster(const assoc::CostProvider& provider, std::span<const double> descriptor) {
  if (descriptor.empty()) return -1;
  if (const auto* m = provider.flow_model()) return m->cluster_for(descriptor);
  if (const auto* m = provider.factorized_model()) return m->parts[0].cluster_for(descriptor);
  return -1;
}

class Tracker {
 public:
  Tracker(const assoc::CostProvider& provider, const TrackerParams& params, int cluster)
      : provider_(provider), params_(params), cluster_(cluster) {}

  void step(const FrameObservations& fo) {
    for (auto& t : tracks_) {
      const auto p = kalman::kf_predict(t.state, params_.kalman);
      t.state = p.state;
      t.predicted = p.predicted;
      if (params_.raw_last_distance) t.predicted(4) = t.last_distance;
    }

    std::vector<int> high, low;
    for (int j = 0; j < static_cast<int>(fo.detections.size()); ++j) {
      const double c = fo.detections[static_cast<std::size_t>(j)].confidence;
      if (c >= params_.det_threshold) {
        high.push_back(j);
      } else if (params_.two_stage && c >= params_.low_threshold) {
        low.push_back(j);
      }
    }

    std::vector<int> all_tracks(tracks_.size());
    for (std::size_t i = 0; i < tracks_.size(); ++i) all_tracks[i] = static_cast<int>(i);
    std::vector<char> matched(tracks_.size(), 0);
    const auto first = match(fo, high, all_tracks, provider_, params_.assoc, 1, matched);

    if (params_.two_stage && !low.empty()) {
      std::vector<int> left;
      for (int i : all_tracks) {
        if (!matched[static_cast<std::size_t>(i)] && tracks_[static_cast<std::size_t>(i)].status == Status::confirmed) {
          left.push_back(i);
        }
      }
      assoc::AssocParams second = params_.assoc;
      second.normalize = 0;
      second.accept_cost = params_.second_stage_accept;
      match(fo, low, left, assoc::CostProvider::iou(), second, 2, matched);
    }

    std::vector<Track> kept;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      Track& t = tracks_[i];
      if (matched[i]) {
        kept.push_back(std::move(t));
        continue;
      }
      ++t.misses;
      if (t.status == Status::tentative || t.misses > params_.max_age) continue;
      kept.push_back(std::move(t));
    }
    tracks_ = std::move(kept);

    for (int j : first) {
      const Detection& d = fo.detections[static_cast<std::size_t>(j)];
      Track t;
      t.id = next_id_++;
      t.state = kalman::kf_init(d, params_.kalman);
      t.hits = 1;
      t.last_distance = d.dist_mean;
      t.history.push_back(observation(d));
      record(t, fo.frame);
      tracks_.push_back(std::move(t));
    }
  }

  TrackOutput finish() {
    std::sort(out_.rows.begin(), out_.rows.end(),
              [](const TrackRow& a, const TrackRow& b) { return std::tie(a.frame, a.id) < std::tie(b.frame, b.id); });
    return std::move(out_);
  }

 private:
  /// Associates `dets` with `cand` tracks, updates the matched ones and
  /// returns the unmatched detection indices.
  std::vector<int> match(const FrameObservations& fo, const std::vector<int>& dets, const std::vector<int>& cand,
                         const assoc::CostProvider& provider, const assoc::AssocParams& ap, int stage,
                         std::vector<char>& matched) {
    std::vector<assoc::TrackInput> inputs;
    for (int i : cand) {
      const Track& t = tracks_[static_cast<std::size_t>(i)];
      inputs.push_back({t.id, t.predicted, context::build_window(t.history), cluster_});
    }
    std::vector<Detection> det_list;
    for (int j : dets) det_list.push_back(fo.detections[static_cast<std::size_t>(j)]);

    const assoc::AssocResult r = assoc::associate(inputs, det_list, provider, ap, params_.exec);
    out_.numerical_failures += r.diag.numerical_failures;
    std::vector<char> used(dets.size(), 0);
    for (const auto& [j, i] : r.matches) {
      const int ti = cand[static_cast<std::size_t>(i)];
      Track& t = tracks_[static_cast<std::size_t>(ti)];
      const Detection& d = det_list[static_cast<std::size_t>(j)];
      try {
        t.state = kalman::kf_update(t.state, kalman::to_measurement(d), d.dist_var, params_.kalman);
      } catch (const NumericalError&) {
        // Restart the filter on the detection rather than abort the sequence.
        ++out_.kalman_failures;
        t.state = kalman::kf_init(d, params_.kalman);
      }
      t.last_distance = d.dist_mean;
      t.history.push_back(observation(d));
      if (t.history.size() > context::kWindowLength + 1) t.history.erase(t.history.begin());
      ++t.hits;
      t.misses = 0;
      matched[static_cast<std::size_t>(ti)] = 1;
      used[static_cast<std::size_t>(j)] = 1;
      out_.log.push_back({fo.frame, stage, dets[static_cast<std::size_t>(j)], t.id, r.raw.cost(j, i)});
      record(t, fo.frame);
    }
    std::vector<int> left;
    for (std::size_t k = 0; k < dets.size(); ++k)
      if (!used[k]) left.push_back(dets[k]);
    return left;
  }

  void record(Track& t, int frame) {
    const TrackRow row{frame, t.id, t.state.bbox(), t.state.distance(), t.state.distance_var()};
    if (t.status == Status::confirmed) {
      out_.rows.push_back(row);
      return;
    }
    t.pending.push_back(row);
    if (t.hits >= params_.n_init) {
      t.status = Status::confirmed;
      out_.rows.insert(out_.rows.end(), t.pending.begin(), t.pending.end());
      t.pending.clear();
    }
  }

  const assoc::CostProvider& provider_;
  const TrackerParams& params_;
  int cluster_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  TrackOutput out_;
};

}  // namespace

void TrackerParams::validate() const {
  if (n_init < 1) throw InvalidArgument("n_init must be >= 1");
  if (max_age < 0) throw InvalidArgument("max_age must be >= 0");
  if (!(assoc.sigma > 0.0)) throw InvalidArgument("sigma must be > 0");
  if (two_stage && !(low_threshold <= det_threshold)) {
    throw InvalidArgument("low_threshold must not exceed det_threshold");
  }
  kalman.validate();
}

TrackOutput track_sequence(const std::vector<FrameObservations>& frames, const assoc::CostProvider& provider,
                           const TrackerParams& params, std::span<const double> scene_descriptor) {
  params.validate();
  for (std::size_t k = 1; k < frames.size(); ++k) {
    if (frames[k].frame <= frames[k - 1].frame) throw InvalidArgument("track_sequence: frames not sorted");
  }
  Tracker t(provider, params, scene_cluster(provider, scene_descriptor));
  for (const auto& fo : frames) t.step(fo);
  return t.finish();
}

std::string format_match_log(const std::vector<MatchLogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    out += std::to_string(e.frame + 1) + "," + std::to_string(e.stage) + "," + std::to_string(e.det) + "," +
           std::to_string(e.track_id) + "," + io::format_double(e.cost, 9) + "\n";
  }
  return out;
}

flow::FlowBatch build_inlier_dataset(std::span<const LabeledSequence> sequences, const TrackerParams& params,
                                     const InlierOptions& options, const context::SceneClusterModel* clusters) {
  if (options.min_history < 1) throw InvalidArgument("min_history must be >= 1");
  std::vector<std::array<double, 5>> xs;
  flow::FlowBatch out;

  for (const auto& seq : sequences) {
    const int cluster =
        (clusters && !clusters->empty() && !seq.descriptor.empty()) ? context::assign_cluster(seq.descriptor, *clusters) : -1;

    std::map<int, std::vector<std::pair<int, const sim::GroundTruthRow*>>> gt_by_frame;
    for (const auto& g : seq.ground_truth) gt_by_frame[g.frame].push_back({g.id, &g});

    // Per identity, matched detections in frame order.
    std::map<int, std::vector<const Detection*>> tracks;
    for (const auto& fo : seq.frames) {
      const auto it = gt_by_frame.find(fo.frame);
      if (it == gt_by_frame.end()) continue;
      std::vector<BBox> det_boxes, gt_boxes;
      for (const auto& d : fo.detections) det_boxes.push_back(d.bbox);
      for (const auto& [id, g] : it->second) gt_boxes.push_back(g->bbox);
      for (const auto& [j, i] : assoc::match_by_iou(det_boxes, gt_boxes, options.match_iou)) {
        tracks[it->second[static_cast<std::size_t>(i)].first].push_back(&fo.detections[static_cast<std::size_t>(j)]);
      }
    }

    for (const auto& [id, dets] : tracks) {
      kalman::KalmanState state;
      std::vector<context::Observation> history;
      double last_distance = 0.0;
      int last_frame = 0;
      for (const Detection* d : dets) {
        if (!history.empty() && d->frame - last_frame > options.max_gap + 1) history.clear();
        if (history.empty()) {
          state = kalman::kf_init(*d, params.kalman);
        } else {
          kalman::Measurement pred;
          for (int f = last_frame; f < d->frame; ++f) {
            const auto p = kalman::kf_predict(state, params.kalman);
            state = p.state;
            pred = p.predicted;
          }
          if (params.raw_last_distance) pred(4) = last_distance;
          if (static_cast<int>(history.size()) >= options.min_history) {
            xs.push_back(assoc::compute_deltas(pred, *d).as_array());
            out.windows.push_back(context::build_window(history));
            out.clusters.push_back(cluster);
          }
          state = kalman::kf_update(state, kalman::to_measurement(*d), d->dist_var, params.kalman);
        }
        history.push_back(observation(*d));
        last_distance = d->dist_mean;
        last_frame = d->frame;
      }
    }
  }
  out.x.resize(5, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (int r = 0; r < 5; ++r) out.x(r, static_cast<Eigen::Index>(k)) = xs[k][static_cast<std::size_t>(r)];
  }
  return out;
}

}  // namespace flowassoc::tracker
