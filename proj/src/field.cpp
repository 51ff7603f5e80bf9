#include "ledits/field.hpp"

#include <cmath>
#include <cstring>

#include "ledits/error.hpp"

namespace ledits {

std::string to_string(const Shape& shape) {
  return "(" + std::to_string(shape.channels) + ", " + std::to_string(shape.height) + ", " +
         std::to_string(shape.width) + ")";
}

Field::Field(Shape shape, float fill) : shape_(shape) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw ParameterError("field shape must be positive, got " + to_string(shape));
  }
  data_.assign(shape.size(), fill);
}

Field::Field(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw ParameterError("field shape must be positive, got " + to_string(shape));
  }
  if (data_.size() != shape.size()) {
    throw ParameterError("field data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape));
  }
}

std::span<float> Field::channel(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * shape_.spatial(),
                                         shape_.spatial());
}

std::span<const float> Field::channel(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * shape_.spatial(),
                                               shape_.spatial());
}

bool Field::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ParameterError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
  }
}

bool bitwise_equal(const Field& a, const Field& b) {
  if (!(a.shape() == b.shape())) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

double rmse(const Field& a, const Field& b) {
  require_same_shape(a.shape(), b.shape(), "rmse");
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double max_abs(const Field& a) {
  double m = 0.0;
  for (float v : a.data()) m = std::max(m, static_cast<double>(std::fabs(v)));
  return m;
}

double mean_square(const Field& a) {
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (float v : a.data()) acc += static_cast<double>(v) * v;
  return acc / static_cast<double>(a.size());
}

Field operator+(const Field& a, const Field& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Field out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Field operator-(const Field& a, const Field& b) {
  require_same_shape(a.shape(), b.shape(), "subtract");
  Field out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Field scaled(const Field& a, float s) {
  Field out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

Field multiply_spatial(const Field& field, const Field& spatial_map) {
  const Shape& s = field.shape();
  if (!(spatial_map.shape() == s.spatial_shape())) {
    throw ParameterError("spatial map shape " + to_string(spatial_map.shape()) +
                         " does not broadcast over " + to_string(s));
  }
  Field out(s);
  const std::size_t n = s.spatial();
  for (int c = 0; c < s.channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * n;
    for (std::size_t i = 0; i < n; ++i) out[base + i] = spatial_map[i] * field[base + i];
  }
  return out;
}

}  // namespace ledits
