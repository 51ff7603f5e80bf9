#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ledits/field.hpp"
#include "ledits/masking.hpp"
#include "ledits/model.hpp"
#include "ledits/sampler.hpp"

namespace ledits {

enum class Direction { positive, negative };

Direction parse_direction(const std::string& name);

/// One edit concept with its own scale and mask threshold.
struct EditInstruction {
  Conditioning conditioning;
  Direction direction = Direction::positive;
  double scale = 0.0;
  /// Percentile threshold lambda in (0, 1).
  double threshold = 0.5;
  /// Binary (1, H, W) mask replacing both implicit masks when present.
  std::optional<Field> user_mask;
  std::string label;
  /// Stash token positions summed into the attention map; empty means every token.
  std::vector<int> attention_tokens;
  /// Executed steps to skip before this concept starts guiding (0 = guide from the first step).
  int warmup_steps = 0;

  /// Throws ParameterError for lambda outside (0, 1), non-finite or negative scale, or a user
  /// mask that is not binary or does not match the spatial shape.
  void validate(const Shape& field_shape) const;
};

/// eps_uncond + s_g (eps_cond - eps_uncond).
Field cfg_eps(const Field& eps_uncond, const Field& eps_cond, double guidance_scale);

/// Signed guidance direction: +(cond - uncond) or -(cond - uncond).
Field psi(const Field& eps_uncond, const Field& eps_cond, Direction direction);

/// phi * psi with the (1, H, W) phi broadcast over channels.
Field gamma(const Field& psi_field, const Field& phi);

/// Elementwise sum in list order; an empty list gives the zero field of `shape`.
Field combine_edits(std::span<const Field> gammas, const Shape& shape);

/// Masks recorded for one concept at one executed step.
struct ConceptMasks {
  std::size_t executed_step = 0;
  int t = 0;
  std::size_t instruction = 0;
  MaskPair masks;
};

/// Guidance callback applying every instruction with its own conditional model call and masks.
/// Concepts are reduced in instruction order so results are bitwise reproducible.
class EditGuidance {
 public:
  EditGuidance(const DenoiserModel& model, std::vector<EditInstruction> edits,
               bool record_masks = false);

  Field operator()(const GuidanceContext& ctx);
  GuidanceFn callback();

  const std::vector<EditInstruction>& edits() const { return edits_; }
  const std::vector<ConceptMasks>& recorded() const { return recorded_; }
  /// Number of conditional model calls made so far.
  std::size_t conditional_calls() const { return conditional_calls_; }

 private:
  const DenoiserModel& model_;
  std::vector<EditInstruction> edits_;
  bool record_masks_;
  std::vector<ConceptMasks> recorded_;
  std::size_t conditional_calls_ = 0;
};

}  // namespace ledits
