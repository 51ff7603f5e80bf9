#pragma once

#include <optional>
#include <span>

#include "ledits/field.hpp"
#include "ledits/model.hpp"

namespace ledits {

/// Mean over layers and heads of each listed token's map, summed over the tokens.
/// Returns a (1, h, w) field at the stash resolution. `token_positions` index the stash tokens.
Field aggregate_attention(const AttentionStash& stash, std::span<const int> token_positions);

/// Nearest-neighbour block replication to (target_height, target_width); channels are kept.
Field upsample_nearest(const Field& map, int target_height, int target_width);

/// Nearest-rank lambda-quantile: the k-th smallest value with k = ceil(lambda * N), k >= 1.
double percentile_threshold(std::span<const float> values, double lambda);

/// 1 where |map| >= the lambda-quantile of |map|, else 0. `map` must be single-channel.
Field mask_from_attention(const Field& upsampled_attention, double lambda);

/// Mean over channels of |psi|, a (1, H, W) magnitude map.
Field spatial_magnitude(const Field& psi);

/// Percentile mask over the channel-aggregated magnitude of psi.
Field mask_from_noise(const Field& psi, double lambda);

/// s_e * m1 * m2, or s_e * user_mask when an override is given. All inputs are (1, H, W).
Field phi_mask(const Field& m1, const Field& m2, double scale, const Field* user_mask = nullptr);

/// True when every entry is exactly 0 or 1.
bool is_binary(const Field& mask);

std::size_t count_selected(const Field& mask);

/// Intersection over union of two binary masks; 0 when both are empty.
double iou(const Field& a, const Field& b);

/// Masks and statistics from one concept at one step.
struct MaskPair {
  Field m1;
  Field m2;
  Field phi;
  double lambda = 0.0;
  std::size_t m1_selected = 0;
  std::size_t m2_selected = 0;
  std::size_t phi_selected = 0;
  bool user_override = false;
};

/// Builds M1 (from the stash, or all ones when absent), M2 and phi for one concept.
MaskPair compute_masks(const std::optional<AttentionStash>& stash,
                       std::span<const int> token_positions, const Field& psi, double lambda,
                       double scale, const Field* user_mask = nullptr);

}  // namespace ledits
