#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowassoc {

/// Axis-aligned box stored as center + extent, in pixels.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  double left() const { return cx - 0.5 * w; }
  double top() const { return cy - 0.5 * h; }
  double right() const { return cx + 0.5 * w; }
  double bottom() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static BBox from_corners(double x0, double y0, double x1, double y1);
  static BBox from_tlwh(double left, double top, double w, double h);

  bool valid() const;
  bool operator==(const BBox&) const = default;
};

struct Detection {
  BBox bbox;
  double dist_mean = 1.0;  // meters
  double dist_var = 1.0;   // meters^2
  double confidence = 1.0;
  int frame = 0;
  std::optional<int> gt_id;

  bool valid() const;
};

struct FrameObservations {
  int frame = 0;
  std::vector<Detection> detections;
  std::string scene_id;
};

/// Signed residuals prediction - candidate; dx..dh in pixels, dd in meters.
struct DeltaFeatures {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;
  double dd = 0.0;

  static constexpr int kDim = 5;
  std::array<double, kDim> as_array() const { return {dx, dy, dw, dh, dd}; }
  static DeltaFeatures from_array(const std::array<double, kDim>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  bool finite() const;
};

double intersection_area(const BBox& a, const BBox& b);
double iou(const BBox& a, const BBox& b);

/// Fraction of `target` covered by the union of `occluders`. The union is
/// computed exactly by coordinate compression.
double occlusion_level(const BBox& target, std::span<const BBox> occluders);

/// Occlusion of every box by the boxes that are strictly closer to the
/// camera (smaller depth). Parallel over targets; `occlusion_levels_serial`
/// is the single-threaded reference and returns identical values.
std::vector<double> occlusion_levels(std::span<const BBox> boxes, std::span<const double> depths);
std::vector<double> occlusion_levels_serial(std::span<const BBox> boxes,
                                            std::span<const double> depths);

}  // namespace flowassoc
