#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ledits/model.hpp"
#include "ledits/schedule.hpp"
#include "ledits/weights.hpp"

namespace ledits {

/// Widths of the small encoder / cross-attention / decoder network.
///
/// conv3x3(C+2 -> enc1) -> pool -> conv3x3(enc1 -> enc2) -> pool -> conv3x3(enc2 -> enc3)
/// -> cross-attention at H/4 x W/4 (residual) -> up -> conv3x3([enc3, enc2] -> enc2)
/// -> up -> conv3x3([enc2, enc1] -> enc1) -> conv3x3(enc1 -> C). SiLU after every hidden conv.
/// The two extra input channels carry sqrt(ab_t) and sqrt(1 - ab_t).
struct TinyArchitecture {
  int in_channels = 1;
  int enc1 = 8;
  int enc2 = 16;
  int enc3 = 16;
  int attn_dim = 16;
  int heads = 2;
  int vocab = 8;
  int embed_dim = 16;

  friend bool operator==(const TinyArchitecture&, const TinyArchitecture&) = default;
};

/// Seeded initialisation. With `zero_query` the attention logits are identically zero.
Weights init_tiny_weights(const TinyArchitecture& arch, std::uint64_t seed,
                          bool zero_query = false);

/// Reads the architecture back from tensor shapes; throws ParameterError on inconsistent sets.
TinyArchitecture infer_architecture(const Weights& weights);

/// Cross-attention denoiser. Token id 0 is the start token; the unconditional estimate uses the
/// context {0}. The stash holds one layer of `heads` maps at (H/4, W/4).
class TinyDenoiser final : public DenoiserModel {
 public:
  static constexpr int kStartToken = 0;

  TinyDenoiser(Weights weights, NoiseSchedule schedule, Shape input);

  EpsOutput eps(const Field& x, int t, const Conditioning* cond) const override;
  Digest fingerprint() const override { return fingerprint_; }
  Shape input_shape() const override { return input_; }

  const Weights& weights() const { return weights_; }
  const TinyArchitecture& architecture() const { return arch_; }

 private:
  Weights weights_;
  NoiseSchedule schedule_;
  Shape input_;
  TinyArchitecture arch_;
  Digest fingerprint_;
};

/// One clean example and the tokens (without the start token) describing it.
struct TrainingExample {
  Field x0;
  std::vector<int> tokens;
};

struct TrainingOptions {
  int steps = 600;
  int batch = 8;
  double learning_rate = 3e-3;
  double final_learning_rate = 3e-4;
  double grad_clip = 1.0;
  /// Probability of training on the bare start-token context.
  double caption_dropout = 0.15;
  /// Probability of dropping each individual token from a kept caption.
  double token_dropout = 0.3;
  /// Per-sample loss weight clamp(noise^2 / signal^2, 1, cap); 1 disables the weighting.
  double noise_weight_cap = 1.0;
  std::uint64_t seed = 7;
};

struct TrainingReport {
  /// Mean minibatch loss over consecutive windows of 50 steps.
  std::vector<double> loss_windows;
  double final_loss = 0.0;
};

/// Adam on the epsilon-prediction MSE with t uniform over [1, T]. Deterministic given the seed
/// and the example generator.
TrainingReport train_tiny_denoiser(Weights& weights, const NoiseSchedule& schedule,
                                   const std::function<TrainingExample(std::uint64_t)>& examples,
                                   const TrainingOptions& options);

/// Loss and gradient of one example, exposed for finite-difference checks.
struct LossAndGradient {
  double loss = 0.0;
  std::vector<std::vector<float>> gradients;  // same order as weights.tensors()
};
LossAndGradient tiny_loss_gradient(const Weights& weights, const NoiseSchedule& schedule,
                                   const Field& x_t, int t, const std::vector<int>& context,
                                   const Field& target_eps);

}  // namespace ledits
