#pragma once

#include <vector>

#include "ledits/model.hpp"
#include "ledits/schedule.hpp"

namespace ledits {

struct GmmComponent {
  Field mean;
  double scale = 1.0;  // isotropic standard deviation
  double weight = 1.0;
};

/// Isotropic Gaussian mixture over fields; the data distribution of the analytic oracle.
struct GmmSpec {
  std::vector<GmmComponent> components;

  /// Throws ParameterError unless the mixture is non-empty, shapes agree, scales are positive
  /// and weights are positive and sum to one (1e-6).
  void validate() const;
  Shape shape() const;
  Digest fingerprint() const;
};

/// Exact epsilon estimate of the noised mixture at step t:
///   eps = (x - sqrt(ab) E[x0 | x]) / sqrt(1 - ab),
/// with component k contributing x | k ~ N(sqrt(ab) mu_k, (ab s_k^2 + 1 - ab) I).
/// A conditioning restricts the mixture to its concept components; nullptr uses all of them.
Field eps_analytic_gmm(const GmmSpec& spec, const NoiseSchedule& schedule, const Field& x, int t,
                       const Conditioning* cond);

/// Posterior responsibilities over the (possibly restricted) component set at step t.
std::vector<double> gmm_responsibilities(const GmmSpec& spec, const NoiseSchedule& schedule,
                                         const Field& x, int t, const std::vector<int>& subset);

class GmmDenoiser final : public DenoiserModel {
 public:
  GmmDenoiser(GmmSpec spec, NoiseSchedule schedule);

  EpsOutput eps(const Field& x, int t, const Conditioning* cond) const override;
  Digest fingerprint() const override { return fingerprint_; }
  Shape input_shape() const override { return spec_.shape(); }

  const GmmSpec& spec() const { return spec_; }

 private:
  GmmSpec spec_;
  NoiseSchedule schedule_;
  Digest fingerprint_;
};

}  // namespace ledits
