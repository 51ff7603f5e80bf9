#include "ledits/guidance.hpp"

#include <cmath>
#include <numeric>

#include "ledits/error.hpp"

namespace ledits {

Direction parse_direction(const std::string& name) {
  if (name == "positive" || name == "+") return Direction::positive;
  if (name == "negative" || name == "-") return Direction::negative;
  throw ParameterError("unknown edit direction '" + name + "'");
}

void EditInstruction::validate(const Shape& field_shape) const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ParameterError("edit '" + label + "': threshold must lie strictly inside (0, 1)");
  }
  if (!std::isfinite(scale) || scale < 0.0) {
    throw ParameterError("edit '" + label + "': scale must be finite and >= 0");
  }
  if (warmup_steps < 0) throw ParameterError("edit '" + label + "': negative warmup");
  if (user_mask) {
    require_same_shape(user_mask->shape(), field_shape.spatial_shape(), "user mask");
    if (!is_binary(*user_mask)) throw ParameterError("edit '" + label + "': user mask not binary");
  }
}

Field cfg_eps(const Field& eps_uncond, const Field& eps_cond, double guidance_scale) {
  require_same_shape(eps_uncond.shape(), eps_cond.shape(), "cfg_eps");
  const auto s = static_cast<float>(guidance_scale);
  Field out(eps_uncond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = eps_uncond[i] + s * (eps_cond[i] - eps_uncond[i]);
  }
  return out;
}

Field psi(const Field& eps_uncond, const Field& eps_cond, Direction direction) {
  require_same_shape(eps_uncond.shape(), eps_cond.shape(), "psi");
  Field out(eps_uncond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float d = eps_cond[i] - eps_uncond[i];
    out[i] = direction == Direction::positive ? d : -d;
  }
  return out;
}

Field gamma(const Field& psi_field, const Field& phi) { return multiply_spatial(psi_field, phi); }

Field combine_edits(std::span<const Field> gammas, const Shape& shape) {
  if (gammas.empty()) return Field(shape);
  // Seeding with the first term (rather than adding it to +0) keeps the single-concept sum
  // bitwise equal to that term, signed zeros included.
  require_same_shape(gammas[0].shape(), shape, "combine_edits");
  Field out = gammas[0];
  for (const Field& g : gammas.subspan(1)) {
    require_same_shape(g.shape(), shape, "combine_edits");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
  }
  return out;
}

EditGuidance::EditGuidance(const DenoiserModel& model, std::vector<EditInstruction> edits,
                           bool record_masks)
    : model_(model), edits_(std::move(edits)), record_masks_(record_masks) {
  for (const auto& e : edits_) e.validate(model_.input_shape());
}

Field EditGuidance::operator()(const GuidanceContext& ctx) {
  std::vector<Field> gammas;
  gammas.reserve(edits_.size());
  for (std::size_t k = 0; k < edits_.size(); ++k) {
    const EditInstruction& edit = edits_[k];
    if (ctx.executed_step < static_cast<std::size_t>(edit.warmup_steps)) continue;
    EpsOutput cond = model_.eps(ctx.x, ctx.t, &edit.conditioning);
    ++conditional_calls_;
    const Field direction = psi(ctx.eps_base, cond.eps, edit.direction);

    std::vector<int> tokens = edit.attention_tokens;
    if (tokens.empty() && cond.attention) {
      tokens.resize(cond.attention->tokens);
      std::iota(tokens.begin(), tokens.end(), 0);
    }
    MaskPair masks = compute_masks(cond.attention, tokens, direction, edit.threshold, edit.scale,
                                   edit.user_mask ? &*edit.user_mask : nullptr);
    gammas.push_back(gamma(direction, masks.phi));
    if (record_masks_) recorded_.push_back({ctx.executed_step, ctx.t, k, std::move(masks)});
  }
  const Field total = combine_edits(gammas, ctx.eps_base.shape());
  Field out(ctx.eps_base.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ctx.eps_base[i] + total[i];
  return out;
}

GuidanceFn EditGuidance::callback() {
  return [this](const GuidanceContext& ctx) { return (*this)(ctx); };
}

}  // namespace ledits
