#pragma once

#include <string>
#include <vector>

#include "flowassoc/core.hpp"
#include "flowassoc/sim.hpp"

namespace flowassoc::io {

/// One MOTChallenge row: `frame,id,bb_left,bb_top,w,h,conf,-1,-1,-1`.
/// Frames are 0-based in memory and 1-based on disk. id is -1 for
/// detections without an identity.
struct MotRow {
  int frame = 0;
  int id = -1;
  BBox bbox;
  double conf = 1.0;
  double dist_mean = 1.0;
  double dist_var = 1.0;
};

/// `det.txt` -> `det.dist.txt`. The sidecar holds `frame,id,dist_mean,dist_var`,
/// row k matching row k of the MOT file.
std::string sidecar_path(const std::string& mot_path);

std::string format_mot(const std::vector<MotRow>& rows);
std::string format_sidecar(const std::vector<MotRow>& rows);
std::vector<MotRow> parse_mot(const std::string& text, const std::string& source = "<mot>");
/// Merges distances from a sidecar into rows parsed from the MOT file.
void parse_sidecar(const std::string& text, std::vector<MotRow>& rows, const std::string& source = "<sidecar>");

void export_mot(const std::string& path, const std::vector<MotRow>& rows);
/// Reads `path` and its sidecar. A missing sidecar is an error unless
/// `require_distances` is false.
std::vector<MotRow> import_mot(const std::string& path, bool require_distances = true);

std::vector<MotRow> rows_from_frames(const std::vector<FrameObservations>& frames);
std::vector<FrameObservations> frames_from_rows(const std::vector<MotRow>& rows, const std::string& scene_id,
                                                int frame_count);

/// Ground truth: `frame,id,bb_left,bb_top,w,h,consider,1,visibility` plus a
/// sidecar `frame,id,distance,occlusion`.
void export_gt(const std::string& path, const std::vector<sim::GroundTruthRow>& rows);
std::vector<sim::GroundTruthRow> import_gt(const std::string& path);

/// `name = <id>` and `descriptor = v0,v1,...` lines.
void export_scene(const std::string& path, const std::string& scene_id, const sim::SceneDescriptor& d);
std::pair<std::string, sim::SceneDescriptor> import_scene(const std::string& path);

std::string read_file(const std::string& path);
/// Writes via a temp file + rename so readers never see partial content.
void write_atomic(const std::string& path, const std::string& content);

std::string format_double(double v, int precision = 17);

}  // namespace flowassoc::io
