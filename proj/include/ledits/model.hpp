#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ledits/field.hpp"
#include "ledits/fingerprint.hpp"

namespace ledits {

/// Prompt-side input of a denoiser call.
///
/// The neural model reads `token_ids` (or `embedding` when it is non-empty); the analytic
/// mixture model reads `concept_components`.
struct Conditioning {
  std::vector<int> token_ids;
  std::vector<std::vector<float>> embedding;
  std::vector<int> concept_components;
  std::string label;

  Digest fingerprint() const;
};

/// Softmax cross-attention probabilities at the model's coarsest resolution.
/// Layout: [layer][head][token][y * width + x]; for each (layer, head, position) the token
/// values sum to one.
struct AttentionStash {
  int layers = 0;
  int heads = 0;
  int tokens = 0;
  int height = 0;
  int width = 0;
  std::vector<float> maps;

  AttentionStash() = default;
  AttentionStash(int layers, int heads, int tokens, int height, int width);

  std::size_t positions() const { return static_cast<std::size_t>(height) * width; }
  std::span<float> map(int layer, int head, int token);
  std::span<const float> map(int layer, int head, int token) const;

  /// Largest deviation of a per-position token sum from one.
  double max_normalisation_error() const;
};

struct EpsOutput {
  Field eps;
  std::optional<AttentionStash> attention;
};

/// epsilon-prediction denoiser. Implementations are immutable and deterministic: identical
/// inputs give bit-identical outputs, and the output shape equals the input shape.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;

  /// `cond == nullptr` requests the unconditional estimate.
  virtual EpsOutput eps(const Field& x, int t, const Conditioning* cond) const = 0;
  virtual Digest fingerprint() const = 0;
  virtual Shape input_shape() const = 0;
};

/// Forwards to another model and counts evaluations.
class CountingModel final : public DenoiserModel {
 public:
  explicit CountingModel(const DenoiserModel& inner) : inner_(inner) {}

  EpsOutput eps(const Field& x, int t, const Conditioning* cond) const override {
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    return inner_.eps(x, t, cond);
  }
  Digest fingerprint() const override { return inner_.fingerprint(); }
  Shape input_shape() const override { return inner_.input_shape(); }

  std::uint64_t evaluations() const { return evaluations_.load(std::memory_order_relaxed); }
  void reset() { evaluations_.store(0, std::memory_order_relaxed); }

 private:
  const DenoiserModel& inner_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

}  // namespace ledits
