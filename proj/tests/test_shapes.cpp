#include <vector>

#include "doctest.h"
#include "ledits/masking.hpp"
#include "ledits/shapes.hpp"

using namespace ledits;

TEST_CASE("shape images are deterministic and consistent with their regions") {
  for (std::uint64_t i = 0; i < 40; ++i) {
    const ShapeImage a = make_shape_image(99, i);
    const ShapeImage b = make_shape_image(99, i);
    CHECK(bitwise_equal(a.x0, b.x0));
    REQUIRE(!a.shapes.empty());
    const std::vector<int> tokens = a.tokens();
    for (std::size_t k = 1; k < tokens.size(); ++k) CHECK(tokens[k - 1] < tokens[k]);
    for (int token : tokens) {
      const Field region = a.region(token);
      CHECK(count_selected(region) > 0);
      CHECK(static_cast<int>(count_selected(region)) <= a.box_area(token));
      for (std::size_t p = 0; p < region.size(); ++p) {
        if (region[p] != 0.0f) CHECK(a.x0[p] == shape_intensity(token));
      }
    }
  }
  CHECK_FALSE(bitwise_equal(make_shape_image(99, 0).x0, make_shape_image(99, 1).x0));
}

TEST_CASE("ellipse membership") {
  ShapeInstance s;
  s.y0 = 2;
  s.x0 = 4;
  s.height = 8;
  s.width = 10;
  CHECK(s.contains(5, 8));
  CHECK_FALSE(s.contains(2, 4));
  CHECK_FALSE(s.contains(9, 13));
  CHECK(s.box_area() == 80);
}

TEST_CASE("a stash concentrated on the region recovers it") {
  // Region aligned to the 4x coarse grid: rows and cols 8..23 of a 32x32 image. The quantile
  // keeps one entry past the region, which costs a whole 4x4 block after upsampling.
  Field truth(Shape{1, 32, 32});
  for (int y = 8; y < 24; ++y) {
    for (int x = 8; x < 24; ++x) truth.at(0, y, x) = 1.0f;
  }
  AttentionStash stash(1, 2, 2, 8, 8);
  for (int h = 0; h < 2; ++h) {
    for (int p = 0; p < 64; ++p) {
      const int y = p / 8, x = p % 8;
      const bool inside = y >= 2 && y < 6 && x >= 2 && x < 6;
      stash.map(0, h, 1)[p] = inside ? 0.9f : 0.05f + 0.0001f * static_cast<float>(p);
      stash.map(0, h, 0)[p] = 1.0f - stash.map(0, h, 1)[p];
    }
  }
  const double lambda = 1.0 - static_cast<double>(count_selected(truth)) / truth.size();
  const int token[] = {1};
  const MaskPair m = compute_masks(stash, token, Field(Shape{1, 32, 32}), lambda, 1.0);
  CHECK(iou(m.m1, truth) >= 0.9);
}
