#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowassoc/core.hpp"
#include "flowassoc/rng.hpp"

using namespace flowassoc;

namespace {

// Brute-force coverage on a fine pixel grid, exact for integer-aligned boxes.
double grid_occlusion(const BBox& t, const std::vector<BBox>& occ) {
  long covered = 0, total = 0;
  for (double y = t.top() + 0.5; y < t.bottom(); y += 1.0) {
    for (double x = t.left() + 0.5; x < t.right(); x += 1.0) {
      ++total;
      for (const auto& o : occ) {
        if (x > o.left() && x < o.right() && y > o.top() && y < o.bottom()) {
          ++covered;
          break;
        }
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(total);
}

BBox random_int_box(Rng& rng) {
  const double x0 = std::floor(uniform(rng, 0.0, 40.0)), y0 = std::floor(uniform(rng, 0.0, 40.0));
  const double w = std::floor(uniform(rng, 1.0, 25.0)), h = std::floor(uniform(rng, 1.0, 25.0));
  return BBox::from_tlwh(x0, y0, w, h);
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("iou cases") {
    const BBox a = BBox::from_corners(0, 0, 2, 2);
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, BBox::from_corners(3, 0, 5, 2)) == 0.0);
    CHECK(iou(a, BBox::from_corners(1, 0, 3, 2)) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    CHECK(iou(a, BBox::from_corners(1, 1, 3, 3)) == iou(BBox::from_corners(1, 1, 3, 3), a));
  }

  TEST_CASE("box conversions") {
    const BBox b = BBox::from_tlwh(10, 20, 4, 6);
    CHECK(b.cx == 12.0);
    CHECK(b.cy == 23.0);
    CHECK(b.right() == 14.0);
    CHECK(b.bottom() == 26.0);
    CHECK(b.valid());
    CHECK_FALSE(BBox{0, 0, 0, 1}.valid());
    Detection d;
    d.bbox = b;
    CHECK(d.valid());
    d.dist_var = 0.0;
    CHECK_FALSE(d.valid());
  }

  TEST_CASE("occlusion_level simple cases") {
    const BBox t = BBox::from_corners(0, 0, 4, 2);
    CHECK(occlusion_level(t, {}) == 0.0);
    std::vector<BBox> same{t};
    CHECK(occlusion_level(t, same) == 1.0);
    std::vector<BBox> halves{BBox::from_corners(-1, -1, 2, 3), BBox::from_corners(2, -1, 5, 3)};
    CHECK(occlusion_level(t, halves) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<BBox> overlapping{BBox::from_corners(0, 0, 3, 2), BBox::from_corners(1, 0, 3, 2)};
    CHECK(occlusion_level(t, overlapping) == doctest::Approx(0.75).epsilon(1e-15));
  }

  TEST_CASE("occlusion_level matches a pixel grid") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      const BBox t = random_int_box(rng);
      std::vector<BBox> occ;
      const int n = static_cast<int>(uniform(rng, 0.0, 5.0));
      for (int k = 0; k < n; ++k) occ.push_back(random_int_box(rng));
      CHECK(occlusion_level(t, occ) == doctest::Approx(grid_occlusion(t, occ)).epsilon(1e-12));
    }
  }

  TEST_CASE("occlusion_levels uses only closer boxes and matches serial") {
    std::vector<BBox> boxes{BBox::from_corners(0, 0, 2, 2), BBox::from_corners(1, 0, 3, 2)};
    std::vector<double> depths{5.0, 10.0};
    const auto occ = occlusion_levels(boxes, depths);
    CHECK(occ[0] == 0.0);
    CHECK(occ[1] == doctest::Approx(0.5));

    Rng rng(4);
    std::vector<BBox> many;
    std::vector<double> d;
    for (int k = 0; k < 300; ++k) {
      many.push_back({uniform(rng, 0, 500), uniform(rng, 0, 500), uniform(rng, 5, 60), uniform(rng, 10, 150)});
      d.push_back(uniform(rng, 1, 50));
    }
    CHECK(occlusion_levels(many, d) == occlusion_levels_serial(many, d));
  }

  TEST_CASE("delta features") {
    const DeltaFeatures f{1, 2, 3, 4, 5};
    CHECK(DeltaFeatures::from_array(f.as_array()).as_array() == f.as_array());
    CHECK(f.finite());
    CHECK_FALSE(DeltaFeatures{0, 0, 0, 0, std::nan("")}.finite());
  }
}
