#include "flowassoc/core.hpp"

#include <algorithm>
#include <cmath>

namespace flowassoc {

BBox BBox::from_corners(double x0, double y0, double x1, double y1) {
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

BBox BBox::from_tlwh(double left, double top, double w, double h) {
  return {left + 0.5 * w, top + 0.5 * h, w, h};
}

bool BBox::valid() const {
  return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) && w > 0.0 &&
         h > 0.0;
}

bool Detection::valid() const {
  return bbox.valid() && std::isfinite(dist_mean) && dist_mean > 0.0 && std::isfinite(dist_var) &&
         dist_var > 0.0 && confidence >= 0.0 && confidence <= 1.0 && frame >= 0;
}

bool DeltaFeatures::finite() const {
  return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dw) && std::isfinite(dh) &&
         std::isfinite(dd);
}

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double occlusion_level(const BBox& target, std::span<const BBox> occluders) {
  struct Rect {
    double x0, y0, x1, y1;
  };
  std::vector<Rect> clipped;
  clipped.reserve(occluders.size());
  for (const auto& o : occluders) {
    Rect r{std::max(o.left(), target.left()), std::max(o.top(), target.top()),
           std::min(o.right(), target.right()), std::min(o.bottom(), target.bottom())};
    if (r.x1 > r.x0 && r.y1 > r.y0) clipped.push_back(r);
  }
  if (clipped.empty()) return 0.0;

  std::vector<double> xs, ys;
  for (const auto& r : clipped) {
    xs.insert(xs.end(), {r.x0, r.x1});
    ys.insert(ys.end(), {r.y0, r.y1});
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  double covered = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double mx = 0.5 * (xs[i] + xs[i + 1]);
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double my = 0.5 * (ys[j] + ys[j + 1]);
      for (const auto& r : clipped) {
        if (mx > r.x0 && mx < r.x1 && my > r.y0 && my < r.y1) {
          covered += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
          break;
        }
      }
    }
  }
  return std::clamp(covered / target.area(), 0.0, 1.0);
}

namespace {

double occlusion_of(std::size_t i, std::span<const BBox> boxes, std::span<const double> depths) {
  std::vector<BBox> occ;
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (j != i && depths[j] < depths[i] && intersection_area(boxes[i], boxes[j]) > 0.0) {
      occ.push_back(boxes[j]);
    }
  }
  return occlusion_level(boxes[i], occ);
}

}  // namespace

std::vector<double> occlusion_levels(std::span<const BBox> boxes, std::span<const double> depths) {
  std::vector<double> out(boxes.size(), 0.0);
  const auto n = static_cast<long>(boxes.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (long i = 0; i < n; ++i) out[i] = occlusion_of(static_cast<std::size_t>(i), boxes, depths);
  return out;
}

std::vector<double> occlusion_levels_serial(std::span<const BBox> boxes,
                                            std::span<const double> depths) {
  std::vector<double> out(boxes.size(), 0.0);
  for (std::size_t i = 0; i < boxes.size(); ++i) out[i] = occlusion_of(i, boxes, depths);
  return out;
}

}  // namespace flowassoc
