#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "ledits/field.hpp"
#include "ledits/model.hpp"
#include "ledits/schedule.hpp"

namespace ledits {

/// Clean-data prediction (x - sqrt(1 - ab_t) eps) / sqrt(ab_t).
Field predict_clean(const NoiseSchedule& schedule, const Field& x_t, const Field& eps, int t);

/// General ancestral step x_{t_prev} = mu_hat(x_t) + sigma z with sigma = eta sqrt(beta_tilde).
/// eta = 0 is deterministic DDIM and ignores z; eta = 1 is DDPM.
Field step_ancestral(const NoiseSchedule& schedule, const Field& x_t, const Field& eps_hat, int t,
                     int t_prev, double eta, const Field& z);

struct StepMean {
  Field mean;
  double sigma = 0.0;
};

/// Mean and noise scale of the second-order multistep SDE-DPM-Solver++ step t -> t_prev.
///
/// `denoised` is the clean-data prediction at x_t; `denoised_prev` the one made at the previous
/// (noisier) grid entry t_next. With h = lambda(t_prev) - lambda(t) and h_last = lambda(t) -
/// lambda(t_next):
///
///   mean = sqrt(1-ab_prev)/sqrt(1-ab_t) e^{-h} x_t + sqrt(ab_prev) (1 - e^{-2h}) D
///          + 0.5 sqrt(ab_prev) (1 - e^{-2h}) (-h_last / h) (D_prev - D)
///
/// The correction is dropped when `denoised_prev` is null (first executed step). A step into
/// t_prev = 0 returns D with sigma = 0.
StepMean dpmpp_2m_sde_mean(const NoiseSchedule& schedule, const Field& x_t, const Field& denoised,
                           const Field* denoised_prev, int t, int t_prev,
                           std::optional<int> t_next);

Field step_dpmpp_2m_sde(const NoiseSchedule& schedule, const Field& x_t, const Field& denoised,
                        const Field* denoised_prev, int t, int t_prev, std::optional<int> t_next,
                        const Field& z);

/// Data-space offset added after a deterministic (sigma = 0) executed step.
struct StepResidual {
  std::size_t executed_step = 0;
  Field delta;
};

/// Per-step z provider for the generation loops.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  /// z for the executed step with the given position (0 = first executed step).
  virtual Field next(std::size_t executed_step, Shape shape) = 0;
  /// Offset to add after the given executed step, if any.
  virtual const Field* residual(std::size_t /*executed_step*/) const { return nullptr; }
};

/// Replays stored noise maps and residuals; running past the end raises PipelineError.
class StoredNoise final : public NoiseSource {
 public:
  explicit StoredNoise(std::span<const Field> maps, std::span<const StepResidual> residuals = {})
      : maps_(maps), residuals_(residuals) {}
  Field next(std::size_t executed_step, Shape shape) override;
  const Field* residual(std::size_t executed_step) const override;

 private:
  std::span<const Field> maps_;
  std::span<const StepResidual> residuals_;
};

/// Fresh standard-normal maps from the counter-based stream (seed, sampling, step).
class SeededNoise final : public NoiseSource {
 public:
  explicit SeededNoise(std::uint64_t seed) : seed_(seed) {}
  Field next(std::size_t executed_step, Shape shape) override;

 private:
  std::uint64_t seed_;
};

class ZeroNoise final : public NoiseSource {
 public:
  Field next(std::size_t, Shape shape) override { return Field(shape); }
};

/// Inputs handed to a guidance callback once per executed step.
struct GuidanceContext {
  const Field& x;
  int t;
  std::size_t executed_step;
  const Field& eps_base;
};

/// Returns the guided epsilon estimate. An empty function means no guidance (eps_base).
using GuidanceFn = std::function<Field(const GuidanceContext&)>;

/// Multistep SDE-DPM-Solver++ generation over the executed part of `grid`, starting from
/// `x_start` at grid.start_step(). One unconditional (or `base`-conditioned) model call per step;
/// any further calls are made by the guidance callback.
Field generate(const DenoiserModel& model, const NoiseSchedule& schedule, const TimestepGrid& grid,
               const GuidanceFn& guidance, NoiseSource& noise, const Field& x_start,
               const Conditioning* base = nullptr);

/// Ancestral (DDPM/DDIM) generation over the executed part of `grid`.
Field generate_ancestral(const DenoiserModel& model, const NoiseSchedule& schedule,
                         const TimestepGrid& grid, double eta, NoiseSource& noise,
                         const Field& x_start, const Conditioning* base = nullptr);

}  // namespace ledits
