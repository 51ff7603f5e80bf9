#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ledits/field.hpp"
#include "ledits/fingerprint.hpp"
#include "ledits/model.hpp"
#include "ledits/sampler.hpp"
#include "ledits/schedule.hpp"

namespace ledits {

/// Edit-friendly latent cache: the auxiliary noisy sequence and the noise maps that make the
/// multistep sampler reproduce x0 exactly.
struct EditFriendlyLatents {
  /// x_seq[i] is the state at grid.steps[i]; x_seq.back() is x0.
  std::vector<Field> x_seq;
  /// z_seq[j] belongs to executed step j (grid index grid.start_index + j). Deterministic
  /// steps (sigma = 0) hold the zero field.
  std::vector<Field> z_seq;
  /// For deterministic steps, x_target - mean: the offset no z can carry. With alpha_bar_0 = 1
  /// the step into t = 0 is always deterministic, so this usually holds exactly one entry.
  std::vector<StepResidual> residuals;
  std::uint64_t seed = 0;
  Digest schedule_fingerprint{};
  Digest model_fingerprint{};
  TimestepGrid grid;

  const Field& x0() const { return x_seq.back(); }
  const Field& start_state() const { return x_seq[grid.start_index]; }
};

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps_t for every grid step, with mutually independent
/// eps_t drawn from the counter-based stream (seed, reconstruction, t). The result has one entry
/// per grid step followed by x0.
std::vector<Field> build_reconstruction_sequence(const Field& x0, const NoiseSchedule& schedule,
                                                 const TimestepGrid& grid, std::uint64_t seed);

struct NoiseMaps {
  std::vector<Field> z_seq;
  std::vector<StepResidual> residuals;
};

/// z_t = (x_{t_prev} - mu_hat(x_t, x_{t_next})) / sigma_t for every executed step. mu_hat is
/// evaluated on the state the generator itself reaches (x_seq up to float rounding), so replaying
/// the maps reproduces the same arithmetic. One model evaluation per executed step.
NoiseMaps extract_noise_maps(const std::vector<Field>& x_seq, const DenoiserModel& model,
                             const NoiseSchedule& schedule, const TimestepGrid& grid,
                             const Conditioning* inversion_conditioning = nullptr);

/// Builds the auxiliary sequence and extracts its noise maps.
EditFriendlyLatents invert(const Field& x0, const DenoiserModel& model,
                           const NoiseSchedule& schedule, const TimestepGrid& grid,
                           std::uint64_t seed,
                           const Conditioning* inversion_conditioning = nullptr);

/// Regenerates from the cache without edits.
Field reconstruct(const EditFriendlyLatents& latents, const DenoiserModel& model,
                  const NoiseSchedule& schedule,
                  const Conditioning* inversion_conditioning = nullptr);

/// Deterministic DDIM inversion over a uniform `steps`-entry grid: reverses the eta = 0 update
/// with epsilon evaluated at the current state and the target timestep.
Field ddim_invert(const Field& x0, const DenoiserModel& model, const NoiseSchedule& schedule,
                  int steps);

/// eta = 0 regeneration over the same grid, the decoding half of the DDIM baseline.
Field ddim_generate(const Field& x_T, const DenoiserModel& model, const NoiseSchedule& schedule,
                    int steps);

/// `LPL1` cache file. Writes atomically (temp + rename).
void save_latents(const EditFriendlyLatents& latents, const std::filesystem::path& path);
EditFriendlyLatents load_latents(const std::filesystem::path& path);

/// Loads a cache for use with the given schedule and model; mismatching fingerprints raise
/// StaleCacheError.
EditFriendlyLatents load_latents_for(const std::filesystem::path& path,
                                     const NoiseSchedule& schedule, const DenoiserModel& model);

/// Throws StaleCacheError if the cache was produced under another schedule or model.
void check_fresh(const EditFriendlyLatents& latents, const NoiseSchedule& schedule,
                 const DenoiserModel& model);

}  // namespace ledits
