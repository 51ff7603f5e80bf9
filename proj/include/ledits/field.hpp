#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ledits {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t spatial() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return static_cast<std::size_t>(channels) * spatial(); }
  Shape spatial_shape() const { return {1, height, width}; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

/// Dense real-valued state with channel-major (C, H, W) layout, stored as 32-bit floats.
class Field {
 public:
  Field() = default;
  explicit Field(Shape shape, float fill = 0.0f);
  Field(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> channel(int c);
  std::span<const float> channel(int c) const;

  bool all_finite() const;

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Throws ParameterError when the two shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Bitwise equality of the stored floats (distinguishes -0 from +0 and NaN payloads).
bool bitwise_equal(const Field& a, const Field& b);

double rmse(const Field& a, const Field& b);
double max_abs(const Field& a);
double mean_square(const Field& a);

Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field scaled(const Field& a, float s);

/// Broadcasts a (1, H, W) map over the channels of a (C, H, W) field and multiplies.
Field multiply_spatial(const Field& field, const Field& spatial_map);

}  // namespace ledits
