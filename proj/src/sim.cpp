#include "flowassoc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "flowassoc/assoc.hpp"
#include "flowassoc/errors.hpp"
#include "flowassoc/rng.hpp"

namespace flowassoc::sim {

namespace {

constexpr double kAspect = 0.41;  // box width / height for a standing person

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

Eigen::Matrix3d Camera::rotation() const {
  // Rows are the camera axes expressed in world coordinates.
  Eigen::Matrix3d yaw_rot;
  yaw_rot << std::cos(yaw), 0.0, -std::sin(yaw),  //
      0.0, 1.0, 0.0,                                //
      std::sin(yaw), 0.0, std::cos(yaw);
  Eigen::Matrix3d pitch_rot;
  pitch_rot << 1.0, 0.0, 0.0,                      //
      0.0, std::cos(pitch), -std::sin(pitch),      //
      0.0, std::sin(pitch), std::cos(pitch);
  return pitch_rot * yaw_rot;
}

std::optional<Projection> project(const Camera& camera, const Eigen::Vector3d& world_point) {
  const Eigen::Vector3d rel = world_point - camera.center;
  const Eigen::Vector3d pc = camera.rotation() * rel;
  if (!(pc.z() > 0.0)) return std::nullopt;
  Projection p;
  p.u = camera.cx + camera.focal * pc.x() / pc.z();
  p.v = camera.cy + camera.focal * pc.y() / pc.z();
  p.distance = rel.norm();
  p.depth = pc.z();
  return p;
}

void ScenarioConfig::validate() const {
  auto fail = [&](const std::string& what) { throw InvalidArgument("scenario '" + name + "': " + what); };
  if (frames <= 0) fail("frame count must be >= 1");
  if (min_pedestrians < 1 || max_pedestrians < min_pedestrians) fail("pedestrian count range invalid");
  if (!(frame_rate > 0.0)) fail("frame_rate must be > 0");
  if (speed_min < 0.0 || speed_max < speed_min) fail("speed range invalid");
  if (heading_noise < 0.0 || box_jitter < 0.0 || dist_noise < 0.0 || height_jitter < 0.0)
    fail("standard deviations must be >= 0");
  if (!in_unit(miss_base) || !in_unit(miss_slope) || !in_unit(lateral_fraction) ||
      !in_unit(late_spawn_fraction) || !in_unit(early_leave_fraction))
    fail("rates must lie in [0,1]");
  if (fp_rate < 0.0) fail("fp_rate must be >= 0");
  if (!(miscalibration > 0.0)) fail("miscalibration must be > 0");
  if (!(world_x > 0.0) || !(world_z_max > world_z_min) || world_z_min <= 0.0) fail("world box invalid");
  if (!(camera.focal > 0.0) || !(person_height > 0.0)) fail("focal and person height must be > 0");
}

Camera camera_at(const ScenarioConfig& config, int frame) {
  const auto& c = config.camera;
  Camera cam;
  cam.focal = c.focal;
  cam.cx = c.cx;
  cam.cy = c.cy;
  cam.image_width = c.image_width;
  cam.image_height = c.image_height;
  cam.center = Eigen::Vector3d(0.0, -c.height, 0.0);
  cam.pitch = c.pitch;
  cam.yaw = c.yaw + c.pan_rate * static_cast<double>(frame) / config.frame_rate;
  return cam;
}

SceneDescriptor describe(const ScenarioConfig& config, const std::vector<PedestrianTrajectory>& peds) {
  double speed_sum = 0.0;
  int steps = 0;
  for (const auto& p : peds) {
    for (std::size_t t = 1; t < p.root.size(); ++t) {
      if (p.active[t] && p.active[t - 1]) {
        speed_sum += (p.root[t] - p.root[t - 1]).norm() * config.frame_rate;
        ++steps;
      }
    }
  }
  const double area = 2.0 * config.world_x * (config.world_z_max - config.world_z_min);
  SceneDescriptor d;
  d.values = {static_cast<double>(peds.size()) / area * 100.0,
              steps > 0 ? speed_sum / steps : 0.0,
              config.camera.pitch,
              config.camera.height,
              config.camera.pan_rate,
              config.box_jitter,
              config.dist_noise,
              config.miss_slope,
              config.fp_rate,
              config.frame_rate};
  return d;
}

Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 1));
  Scenario sc;
  sc.config = config;

  const int count = std::uniform_int_distribution<int>(config.min_pedestrians, config.max_pedestrians)(rng);
  const double dt = 1.0 / config.frame_rate;
  const int frames = config.frames;

  auto random_point = [&]() {
    return Eigen::Vector2d(uniform(rng, -config.world_x, config.world_x),
                           uniform(rng, config.world_z_min, config.world_z_max));
  };
  auto clamp_box = [&](Eigen::Vector2d p) {
    p.x() = std::clamp(p.x(), -config.world_x, config.world_x);
    p.y() = std::clamp(p.y(), config.world_z_min, config.world_z_max);
    return p;
  };

  for (int id = 0; id < count; ++id) {
    PedestrianTrajectory ped;
    ped.id = id + 1;
    ped.height = config.person_height * (1.0 + uniform(rng, -config.height_jitter, config.height_jitter));
    const double speed = uniform(rng, config.speed_min, config.speed_max);
    const bool lateral = uniform(rng, 0.0, 1.0) < config.lateral_fraction;

    int start = 0;
    int end = frames;
    if (frames > 4 && uniform(rng, 0.0, 1.0) < config.late_spawn_fraction) {
      start = std::uniform_int_distribution<int>(1, frames / 2)(rng);
    }
    if (frames > 4 && uniform(rng, 0.0, 1.0) < config.early_leave_fraction) {
      const int lo = std::min(frames, start + std::max(2, frames / 4));
      end = std::uniform_int_distribution<int>(lo, frames)(rng);
    }

    Eigen::Vector2d pos;
    Eigen::Vector2d waypoint;
    double lane_z = 0.0;
    int side = uniform(rng, 0.0, 1.0) < 0.5 ? -1 : 1;
    if (lateral) {
      lane_z = uniform(rng, config.world_z_min, config.world_z_max);
      pos = Eigen::Vector2d(side * config.world_x * uniform(rng, 0.0, 1.0), lane_z);
      waypoint = clamp_box(Eigen::Vector2d(-side * config.world_x, lane_z + normal(rng, 0.0, 0.3)));
    } else {
      pos = random_point();
      waypoint = random_point();
      for (int tries = 0; tries < 100 && (waypoint - pos).norm() < config.min_waypoint_distance; ++tries) {
        waypoint = random_point();
      }
    }

    ped.root.resize(static_cast<std::size_t>(frames));
    ped.active.assign(static_cast<std::size_t>(frames), false);
    const double root_y = -0.5 * ped.height;
    for (int t = 0; t < frames; ++t) {
      if (t > start) {
        const Eigen::Vector2d to = waypoint - pos;
        const double step = speed * dt;
        if (to.norm() <= std::max(step, 0.3)) {
          if (lateral) {
            side = -side;
            waypoint = clamp_box(Eigen::Vector2d(-side * config.world_x, lane_z + normal(rng, 0.0, 0.3)));
          } else {
            waypoint = random_point();
            for (int tries = 0; tries < 100 && (waypoint - pos).norm() < config.min_waypoint_distance;
                 ++tries) {
              waypoint = random_point();
            }
          }
        }
        const Eigen::Vector2d dir = waypoint - pos;
        double heading = std::atan2(dir.y(), dir.x());
        if (config.heading_noise > 0.0) heading += normal(rng, 0.0, config.heading_noise);
        pos = clamp_box(pos + step * Eigen::Vector2d(std::cos(heading), std::sin(heading)));
      }
      ped.root[static_cast<std::size_t>(t)] = Eigen::Vector3d(pos.x(), root_y, pos.y());
      ped.active[static_cast<std::size_t>(t)] = t >= start && t < end;
    }
    sc.pedestrians.push_back(std::move(ped));
  }
  sc.descriptor = describe(config, sc.pedestrians);
  return sc;
}

RenderedSequence render_detections(const Scenario& scenario) {
  const auto& cfg = scenario.config;
  Rng rng(derive_seed(cfg.seed, 2));
  RenderedSequence out;
  std::vector<BBox> size_pool;

  for (int t = 0; t < cfg.frames; ++t) {
    const Camera cam = camera_at(cfg, t);
    std::vector<BBox> boxes;
    std::vector<double> dists;
    std::vector<int> ids;
    for (const auto& ped : scenario.pedestrians) {
      if (!ped.active[static_cast<std::size_t>(t)]) continue;
      const auto proj = project(cam, ped.root[static_cast<std::size_t>(t)]);
      if (!proj || proj->depth < 1.0) continue;
      if (proj->u < 0.0 || proj->u > cam.image_width || proj->v < 0.0 || proj->v > cam.image_height) continue;
      const double h = cam.focal * ped.height / proj->distance;
      boxes.push_back({proj->u, proj->v, kAspect * h, h});
      dists.push_back(proj->distance);
      ids.push_back(ped.id);
    }
    const auto occ = occlusion_levels(boxes, dists);

    FrameObservations fo;
    fo.frame = t;
    fo.scene_id = cfg.name;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      out.ground_truth.push_back({t, ids[k], boxes[k], dists[k], occ[k], true});
      size_pool.push_back(boxes[k]);

      const double p_miss = std::clamp(cfg.miss_base + cfg.miss_slope * occ[k], 0.0, 1.0);
      // Always draw so the noise stream does not depend on the miss outcome.
      const double u = uniform(rng, 0.0, 1.0);
      const double j0 = normal(rng), j1 = normal(rng), j2 = normal(rng), j3 = normal(rng);
      const double dn = normal(rng), cn = normal(rng);
      if (u < p_miss) continue;

      Detection d;
      d.frame = t;
      d.gt_id = ids[k];
      d.bbox = {boxes[k].cx + cfg.box_jitter * j0, boxes[k].cy + cfg.box_jitter * j1,
                std::max(2.0, boxes[k].w + cfg.box_jitter * j2), std::max(2.0, boxes[k].h + cfg.box_jitter * j3)};
      const double scale = cfg.dist_noise_proportional ? dists[k] / cfg.dist_noise_reference : 1.0;
      const double sigma = cfg.dist_noise * scale;
      d.dist_mean = std::max(0.1, dists[k] + sigma * dn);
      d.dist_var = std::max(sigma * sigma * cfg.miscalibration, 1e-6);
      d.confidence = std::clamp(0.95 - 0.5 * occ[k] + 0.03 * cn, 0.05, 1.0);
      fo.detections.push_back(d);
    }

    if (cfg.fp_rate > 0.0) {
      const int n_fp = std::poisson_distribution<int>(cfg.fp_rate)(rng);
      for (int f = 0; f < n_fp; ++f) {
        BBox size{0.0, 0.0, 40.0, 100.0};
        if (!size_pool.empty()) {
          size = size_pool[std::uniform_int_distribution<std::size_t>(0, size_pool.size() - 1)(rng)];
        }
        Detection d;
        d.frame = t;
        d.bbox = {uniform(rng, 0.0, cam.image_width), uniform(rng, 0.0, cam.image_height), size.w, size.h};
        const double base = cam.focal * cfg.person_height / size.h;
        const double scale = cfg.dist_noise_proportional ? base / cfg.dist_noise_reference : 1.0;
        const double sigma = cfg.dist_noise * scale;
        d.dist_mean = std::max(0.1, base + sigma * normal(rng));
        d.dist_var = std::max(sigma * sigma * cfg.miscalibration, 1e-6);
        d.confidence = uniform(rng, 0.05, 0.5);
        fo.detections.push_back(d);
      }
    }
    out.frames.push_back(std::move(fo));
  }
  return out;
}

void apply_eval_filters(std::vector<GroundTruthRow>& gt, double max_distance, int max_hidden_frames,
                        double hidden_occlusion) {
  std::vector<std::size_t> order(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gt[a].id != gt[b].id ? gt[a].id < gt[b].id : gt[a].frame < gt[b].frame;
  });
  int current_id = -1;
  int hidden_run = 0;
  int prev_frame = 0;
  for (std::size_t idx : order) {
    auto& row = gt[idx];
    int gap = 0;
    if (row.id != current_id) {
      current_id = row.id;
      hidden_run = 0;
    } else {
      gap = row.frame - prev_frame - 1;
    }
    prev_frame = row.frame;
    // Frames out of view between two hidden rows count as hidden too.
    hidden_run = row.occlusion >= hidden_occlusion ? hidden_run + 1 + gap : 0;
    row.consider = row.distance <= max_distance && hidden_run <= max_hidden_frames;
  }
}

std::vector<FrameObservations> with_ground_truth_distances(std::vector<FrameObservations> frames,
                                                           const std::vector<GroundTruthRow>& gt) {
  std::map<int, std::vector<const GroundTruthRow*>> by_frame;
  for (const auto& r : gt) by_frame[r.frame].push_back(&r);
  for (auto& fo : frames) {
    auto it = by_frame.find(fo.frame);
    if (it == by_frame.end()) continue;
    std::vector<BBox> det_boxes, gt_boxes;
    for (const auto& d : fo.detections) det_boxes.push_back(d.bbox);
    for (const auto* r : it->second) gt_boxes.push_back(r->bbox);
    for (const auto& [di, gi] : assoc::match_by_iou(det_boxes, gt_boxes, 0.5)) {
      auto& d = fo.detections[static_cast<std::size_t>(di)];
      d.dist_mean = it->second[static_cast<std::size_t>(gi)]->distance;
      d.dist_var = 1e-4;
    }
  }
  return frames;
}

std::vector<std::string> preset_names() {
  return {"easy", "moderate", "hard", "plaza", "street", "panning", "noisy"};
}

ScenarioConfig preset(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  if (name == "easy") {
    c.min_pedestrians = 5;
    c.max_pedestrians = 8;
    c.frame_rate = 20.0;
    c.miss_base = 0.02;
    c.miss_slope = 0.3;
    c.fp_rate = 0.1;
    c.box_jitter = 1.0;
    c.dist_noise = 0.3;
  } else if (name == "moderate") {
    c.min_pedestrians = 10;
    c.max_pedestrians = 16;
    c.lateral_fraction = 0.4;
    c.miss_base = 0.05;
    c.miss_slope = 0.6;
    c.fp_rate = 0.3;
    c.box_jitter = 2.0;
    c.dist_noise = 0.5;
  } else if (name == "hard") {
    c.min_pedestrians = 16;
    c.max_pedestrians = 22;
    c.lateral_fraction = 0.8;
    c.world_z_min = 6.0;
    c.world_z_max = 24.0;
    c.speed_min = 1.0;
    c.speed_max = 2.0;
    c.miss_base = 0.05;
    c.miss_slope = 0.9;
    c.fp_rate = 0.5;
    c.box_jitter = 2.0;
    c.dist_noise = 0.5;
  } else if (name == "plaza") {
    c.min_pedestrians = 8;
    c.max_pedestrians = 12;
    c.speed_min = 0.4;
    c.speed_max = 0.9;
    c.heading_noise = 0.15;
    c.box_jitter = 0.5;
    c.dist_noise = 0.15;
    c.miss_base = 0.02;
    c.miss_slope = 0.4;
  } else if (name == "street") {
    c.min_pedestrians = 8;
    c.max_pedestrians = 12;
    c.lateral_fraction = 0.9;
    c.speed_min = 1.4;
    c.speed_max = 2.4;
    c.heading_noise = 0.01;
    c.box_jitter = 1.5;
    c.dist_noise = 0.4;
    c.miss_base = 0.02;
    c.miss_slope = 0.4;
  } else if (name == "panning") {
    c.min_pedestrians = 8;
    c.max_pedestrians = 12;
    c.camera.pan_rate = 0.08;
    c.box_jitter = 1.0;
    c.dist_noise = 0.3;
    c.miss_base = 0.02;
    c.miss_slope = 0.4;
  } else if (name == "noisy") {
    c.min_pedestrians = 8;
    c.max_pedestrians = 12;
    c.box_jitter = 4.0;
    c.dist_noise = 1.2;
    c.camera.pitch = 0.3;
    c.camera.height = 6.0;
    c.miss_base = 0.05;
    c.miss_slope = 0.5;
    c.fp_rate = 0.3;
  } else {
    throw ConfigError("unknown scenario preset '" + name + "'");
  }
  return c;
}

std::vector<ScenarioConfig> make_suite(const ScenarioConfig& base, int count, std::uint64_t seed) {
  std::vector<ScenarioConfig> out;
  Rng rng(derive_seed(seed, 0x5c));
  for (int i = 0; i < count; ++i) {
    ScenarioConfig c = base;
    c.name = base.name + "_" + std::to_string(i);
    c.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(i));
    const auto jitter = [&](double v, double rel) { return v * (1.0 + uniform(rng, -rel, rel)); };
    c.camera.pitch = jitter(c.camera.pitch, 0.2);
    c.camera.height = jitter(c.camera.height, 0.15);
    c.box_jitter = jitter(c.box_jitter, 0.15);
    c.dist_noise = jitter(c.dist_noise, 0.15);
    c.speed_min = jitter(c.speed_min, 0.1);
    c.speed_max = std::max(c.speed_min, jitter(c.speed_max, 0.1));
    out.push_back(c);
  }
  return out;
}

}  // namespace flowassoc::sim
