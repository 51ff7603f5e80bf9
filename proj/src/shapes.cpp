#include "ledits/shapes.hpp"

#include <algorithm>

#include "ledits/error.hpp"
#include "ledits/random.hpp"

namespace ledits {

float shape_intensity(int token) {
  switch (token) {
    case 1: return 1.2f;
    case 2: return -1.2f;
    case 3: return 2.4f;
    default: throw ParameterError("unknown shape token " + std::to_string(token));
  }
}

bool ShapeInstance::contains(int y, int x) const {
  const double dy = (y + 0.5 - y0 - 0.5 * height) / (0.5 * height);
  const double dx = (x + 0.5 - x0 - 0.5 * width) / (0.5 * width);
  return dy * dy + dx * dx <= 1.0;
}

std::vector<int> ShapeImage::tokens() const {
  std::vector<int> out;
  for (const auto& s : shapes) {
    if (std::find(out.begin(), out.end(), s.token) == out.end()) out.push_back(s.token);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int ShapeImage::box_area(int token) const {
  int area = 0;
  for (const auto& s : shapes) {
    if (s.token == token) area += s.box_area();
  }
  return area;
}

Field ShapeImage::region(int token) const {
  Field mask(x0.shape().spatial_shape());
  for (const auto& s : shapes) {
    if (s.token != token) continue;
    for (int y = s.y0; y < s.y0 + s.height; ++y) {
      for (int x = s.x0; x < s.x0 + s.width; ++x) {
        if (s.contains(y, x)) mask.at(0, y, x) = 1.0f;
      }
    }
  }
  return mask;
}

namespace {

int uniform_int(CounterRng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint32_t>(hi - lo + 1)));
}

void pick_size(CounterRng& rng, int height, int width, int& h, int& w) {
  const int unit = std::min(height, width);
  h = uniform_int(rng, unit / 4, unit / 2);
  w = uniform_int(rng, unit / 4, unit / 2);
}

bool overlaps(const ShapeInstance& a, const ShapeInstance& b) {
  constexpr int gap = 1;
  return a.x0 < b.x0 + b.width + gap && b.x0 < a.x0 + a.width + gap &&
         a.y0 < b.y0 + b.height + gap && b.y0 < a.y0 + a.height + gap;
}

}  // namespace

ShapeImage make_shape_image(std::uint64_t seed, std::uint64_t index, int height, int width) {
  if (height < 16 || width < 16) throw ParameterError("shape images need at least 16x16");
  CounterRng rng(seed, NoiseDomain::dataset, static_cast<std::uint32_t>(index));
  ShapeImage img;
  img.x0 = Field(Shape{1, height, width}, kBackground);

  const int count = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < count; ++k) {
    const int token = 1 + static_cast<int>(rng.below(kShapeTypes));
    for (int attempt = 0; attempt < 64; ++attempt) {
      ShapeInstance s;
      s.token = token;
      pick_size(rng, height, width, s.height, s.width);
      s.y0 = uniform_int(rng, 1, height - s.height - 1);
      s.x0 = uniform_int(rng, 1, width - s.width - 1);
      const bool clash = std::any_of(img.shapes.begin(), img.shapes.end(),
                                     [&](const ShapeInstance& o) { return overlaps(s, o); });
      if (!clash) {
        img.shapes.push_back(s);
        break;
      }
    }
  }
  for (const auto& s : img.shapes) {
    const float v = shape_intensity(s.token);
    for (int y = s.y0; y < s.y0 + s.height; ++y) {
      for (int x = s.x0; x < s.x0 + s.width; ++x) {
        if (s.contains(y, x)) img.x0.at(0, y, x) = v;
      }
    }
  }
  return img;
}

}  // namespace ledits
