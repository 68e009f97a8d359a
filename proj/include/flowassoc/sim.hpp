#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowassoc/core.hpp"

namespace flowassoc::sim {

struct CameraConfig {
  double focal = 1000.0;  // px
  double cx = 960.0;      // principal point, px
  double cy = 540.0;
  double image_width = 1920.0;
  double image_height = 1080.0;
  double height = 3.0;    // m above ground
  double pitch = 0.15;    // rad, positive tilts down
  double yaw = 0.0;       // rad
  double pan_rate = 0.0;  // rad/s
};

/// Pinhole camera at a fixed instant. World frame: x right, y down, z forward,
/// ground plane y = 0.
struct Camera {
  double focal = 1000.0;
  double cx = 960.0;
  double cy = 540.0;
  double image_width = 1920.0;
  double image_height = 1080.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double pitch = 0.0;
  double yaw = 0.0;

  Eigen::Matrix3d rotation() const;  // world -> camera
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double distance = 0.0;  // Euclidean, from the camera center
  double depth = 0.0;     // along the optical axis
};

/// Standard pinhole projection. Points with depth <= 0 are not visible and
/// yield nullopt.
std::optional<Projection> project(const Camera& camera, const Eigen::Vector3d& world_point);

struct ScenarioConfig {
  std::string name = "scene";
  int min_pedestrians = 8;
  int max_pedestrians = 12;
  int frames = 200;
  double frame_rate = 10.0;  // Hz

  double speed_min = 0.8;  // m/s
  double speed_max = 1.6;
  double heading_noise = 0.05;    // rad per frame
  double lateral_fraction = 0.0;  // share of walkers crossing the view at a fixed depth
  double world_x = 12.0;          // half-width of the walkable box, m
  double world_z_min = 5.0;
  double world_z_max = 30.0;
  double min_waypoint_distance = 3.0;
  double late_spawn_fraction = 0.3;
  double early_leave_fraction = 0.3;

  CameraConfig camera;

  double miss_base = 0.0;
  double miss_slope = 0.0;  // extra miss probability per unit occlusion
  double fp_rate = 0.0;     // expected false positives per frame
  double box_jitter = 0.0;  // px

  double dist_noise = 0.0;  // sensor std, m
  bool dist_noise_proportional = false;
  double dist_noise_reference = 10.0;  // distance at which a proportional std equals dist_noise
  double miscalibration = 1.0;         // reported variance multiplier

  double person_height = 1.7;
  double height_jitter = 0.1;  // relative, uniform

  std::uint64_t seed = 0;

  void validate() const;
};

/// Fixed-length scenario feature vector used for scene clustering.
struct SceneDescriptor {
  static constexpr int kDim = 10;
  std::vector<double> values = std::vector<double>(kDim, 0.0);
};

struct PedestrianTrajectory {
  int id = 0;
  double height = 1.7;
  std::vector<Eigen::Vector3d> root;  // one per frame; meaningful where active
  std::vector<bool> active;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<PedestrianTrajectory> pedestrians;
  SceneDescriptor descriptor;
};

struct GroundTruthRow {
  int frame = 0;
  int id = 0;
  BBox bbox;
  double distance = 0.0;
  double occlusion = 0.0;
  bool consider = true;
};

struct RenderedSequence {
  std::vector<FrameObservations> frames;
  std::vector<GroundTruthRow> ground_truth;
};

Camera camera_at(const ScenarioConfig& config, int frame);

Scenario generate_scenario(const ScenarioConfig& config);
RenderedSequence render_detections(const Scenario& scenario);

SceneDescriptor describe(const ScenarioConfig& config, const std::vector<PedestrianTrajectory>& peds);

/// Marks ground-truth rows ignored by evaluation: beyond `max_distance`, or
/// after more than `max_hidden_frames` consecutive frames at occlusion >=
/// `hidden_occlusion` (the identity re-activates once it is visible again).
void apply_eval_filters(std::vector<GroundTruthRow>& gt, double max_distance = 70.0,
                        int max_hidden_frames = 60, double hidden_occlusion = 0.95);

/// Replaces sensor distances by ground truth for detections that match a
/// ground-truth box (IoU >= 0.5, per-frame optimal matching). Unmatched
/// detections keep their reading.
std::vector<FrameObservations> with_ground_truth_distances(std::vector<FrameObservations> frames,
                                                           const std::vector<GroundTruthRow>& gt);

/// Named scenario families: easy, moderate, hard, plaza, street, panning, noisy.
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// `count` concrete scenarios drawn around `base`, with per-scenario parameter
/// jitter and derived seeds. Pure function of (base, count, seed).
std::vector<ScenarioConfig> make_suite(const ScenarioConfig& base, int count, std::uint64_t seed);

}  // namespace flowassoc::sim
