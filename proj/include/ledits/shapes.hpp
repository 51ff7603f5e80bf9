#pragma once

#include <cstdint>
#include <vector>

#include "ledits/field.hpp"

namespace ledits {

/// Shape types double as caption tokens (1..kShapeTypes); 0 is reserved for the start token.
inline constexpr int kShapeTypes = 3;
inline constexpr float kBackground = 0.0f;

/// Filled ellipse inscribed in its bounding box (y0, x0, height, width).
struct ShapeInstance {
  int token = 0;
  int y0 = 0, x0 = 0, height = 0, width = 0;

  /// True when the centre of pixel (y, x) lies inside the ellipse.
  bool contains(int y, int x) const;
  int box_area() const { return height * width; }
};

/// One synthetic single-channel image with exact per-shape ground truth.
struct ShapeImage {
  Field x0;
  std::vector<ShapeInstance> shapes;  // non-overlapping boxes; a token may repeat

  /// Distinct tokens present, ascending.
  std::vector<int> tokens() const;
  /// (1, H, W) binary mask of every shape carrying `token`; all zeros when absent.
  Field region(int token) const;
  /// Summed bounding-box area of the shapes carrying `token`.
  int box_area(int token) const;
};

/// Deterministic generator: 1 to 3 axis-aligned ellipses on a constant background, with
/// non-overlapping bounding boxes. Each shape's type is drawn independently, so one shape's
/// caption token says nothing about the others. Sizes are drawn independently of type; the type
/// sets the fill intensity only, so a shape's outline shows up at higher noise levels than its
/// type does.
ShapeImage make_shape_image(std::uint64_t seed, std::uint64_t index, int height = 32,
                            int width = 32);

/// Intensity painted for a token.
float shape_intensity(int token);

}  // namespace ledits
