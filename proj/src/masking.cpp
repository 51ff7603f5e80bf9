#include "ledits/masking.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ledits/error.hpp"

namespace ledits {

Field aggregate_attention(const AttentionStash& stash, std::span<const int> token_positions) {
  if (token_positions.empty()) throw ParameterError("attention aggregation needs edit tokens");
  for (int k : token_positions) {
    if (k < 0 || k >= stash.tokens) {
      throw ParameterError("edit token position " + std::to_string(k) +
                           " not present in the attention stash");
    }
  }
  const std::size_t n = stash.positions();
  const double inv = 1.0 / (static_cast<double>(stash.layers) * stash.heads);
  std::vector<double> acc(n, 0.0);
  for (int k : token_positions) {
    std::vector<double> mean(n, 0.0);
    for (int l = 0; l < stash.layers; ++l) {
      for (int h = 0; h < stash.heads; ++h) {
        const auto m = stash.map(l, h, k);
        for (std::size_t p = 0; p < n; ++p) mean[p] += m[p];
      }
    }
    for (std::size_t p = 0; p < n; ++p) acc[p] += mean[p] * inv;
  }
  Field out(Shape{1, stash.height, stash.width});
  for (std::size_t p = 0; p < n; ++p) out[p] = static_cast<float>(acc[p]);
  return out;
}

Field upsample_nearest(const Field& map, int target_height, int target_width) {
  const Shape s = map.shape();
  if (target_height <= 0 || target_width <= 0 || target_height % s.height != 0 ||
      target_width % s.width != 0) {
    throw ParameterError("upsample target " + std::to_string(target_height) + "x" +
                         std::to_string(target_width) + " is not an integer multiple of " +
                         std::to_string(s.height) + "x" + std::to_string(s.width));
  }
  const int fy = target_height / s.height;
  const int fx = target_width / s.width;
  Field out(Shape{s.channels, target_height, target_width});
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < target_height; ++y) {
      for (int x = 0; x < target_width; ++x) out.at(c, y, x) = map.at(c, y / fy, x / fx);
    }
  }
  return out;
}

double percentile_threshold(std::span<const float> values, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ParameterError("mask threshold must lie in (0, 1)");
  if (values.empty()) throw ParameterError("percentile of an empty set");
  std::vector<float> sorted(values.begin(), values.end());
  for (float v : sorted) {
    if (!std::isfinite(v)) throw ParameterError("percentile input is not finite");
  }
  const std::size_t n = sorted.size();
  // The epsilon keeps products such as 0.07 * 100 = 7.000000000000001 on the integer.
  auto k = static_cast<std::size_t>(std::ceil(lambda * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end());
  return sorted[k - 1];
}

namespace {

Field threshold_abs(const Field& map, double lambda) {
  if (map.shape().channels != 1) throw ParameterError("mask source must be single-channel");
  std::vector<float> mags(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) mags[i] = std::fabs(map[i]);
  const double thr = percentile_threshold(mags, lambda);
  Field mask(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) mask[i] = mags[i] >= thr ? 1.0f : 0.0f;
  return mask;
}

}  // namespace

Field mask_from_attention(const Field& upsampled_attention, double lambda) {
  return threshold_abs(upsampled_attention, lambda);
}

Field spatial_magnitude(const Field& psi) {
  const Shape s = psi.shape();
  const std::size_t n = s.spatial();
  Field out(s.spatial_shape());
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int c = 0; c < s.channels; ++c) acc += std::fabs(psi[c * n + p]);
    out[p] = static_cast<float>(acc / s.channels);
  }
  return out;
}

Field mask_from_noise(const Field& psi, double lambda) {
  return threshold_abs(spatial_magnitude(psi), lambda);
}

bool is_binary(const Field& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(),
                     [](float v) { return v == 0.0f || v == 1.0f; });
}

Field phi_mask(const Field& m1, const Field& m2, double scale, const Field* user_mask) {
  require_same_shape(m1.shape(), m2.shape(), "phi masks");
  const auto s = static_cast<float>(scale);
  Field out(m1.shape());
  if (user_mask != nullptr) {
    require_same_shape(user_mask->shape(), m1.shape(), "user mask");
    if (!is_binary(*user_mask)) throw ParameterError("user mask must be binary");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * (*user_mask)[i];
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * (m1[i] * m2[i]);
  return out;
}

std::size_t count_selected(const Field& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](float v) { return v != 0.0f; }));
}

double iou(const Field& a, const Field& b) {
  require_same_shape(a.shape(), b.shape(), "iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0.0f;
    const bool y = b[i] != 0.0f;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskPair compute_masks(const std::optional<AttentionStash>& stash,
                       std::span<const int> token_positions, const Field& psi, double lambda,
                       double scale, const Field* user_mask) {
  const Shape spatial = psi.shape().spatial_shape();
  MaskPair out;
  out.lambda = lambda;
  if (stash) {
    const Field coarse = aggregate_attention(*stash, token_positions);
    out.m1 = mask_from_attention(upsample_nearest(coarse, spatial.height, spatial.width), lambda);
  } else {
    out.m1 = Field(spatial, 1.0f);
  }
  out.m2 = mask_from_noise(psi, lambda);
  out.user_override = user_mask != nullptr;
  out.phi = phi_mask(out.m1, out.m2, scale, user_mask);
  out.m1_selected = count_selected(out.m1);
  out.m2_selected = count_selected(out.m2);
  out.phi_selected = count_selected(out.phi);
  return out;
}

}  // namespace ledits
