#include "ledits/model.hpp"

#include <cmath>
#include <limits>

#include "ledits/error.hpp"

namespace ledits {

Digest Conditioning::fingerprint() const {
  Fingerprinter fp;
  fp.text("ledits.conditioning.v1");
  fp.u64(token_ids.size());
  for (int id : token_ids) fp.u32(static_cast<std::uint32_t>(id));
  fp.u64(embedding.size());
  for (const auto& row : embedding) fp.floats(row);
  fp.u64(concept_components.size());
  for (int k : concept_components) fp.u32(static_cast<std::uint32_t>(k));
  return fp.finish();
}

AttentionStash::AttentionStash(int layers_, int heads_, int tokens_, int height_, int width_)
    : layers(layers_), heads(heads_), tokens(tokens_), height(height_), width(width_) {
  if (layers <= 0 || heads <= 0 || tokens <= 0 || height <= 0 || width <= 0) {
    throw ParameterError("attention stash dimensions must be positive");
  }
  maps.assign(static_cast<std::size_t>(layers) * heads * tokens * positions(), 0.0f);
}

std::span<float> AttentionStash::map(int layer, int head, int token) {
  const std::size_t offset =
      ((static_cast<std::size_t>(layer) * heads + head) * tokens + token) * positions();
  return std::span<float>(maps).subspan(offset, positions());
}

std::span<const float> AttentionStash::map(int layer, int head, int token) const {
  const std::size_t offset =
      ((static_cast<std::size_t>(layer) * heads + head) * tokens + token) * positions();
  return std::span<const float>(maps).subspan(offset, positions());
}

double AttentionStash::max_normalisation_error() const {
  double worst = 0.0;
  for (int l = 0; l < layers; ++l) {
    for (int h = 0; h < heads; ++h) {
      for (std::size_t p = 0; p < positions(); ++p) {
        double sum = 0.0;
        for (int k = 0; k < tokens; ++k) {
          const float v = map(l, h, k)[p];
          if (v < 0.0f) return std::numeric_limits<double>::infinity();
          sum += v;
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
    }
  }
  return worst;
}

}  // namespace ledits
