#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ledits/gmm_model.hpp"
#include "ledits/guidance.hpp"
#include "ledits/inversion.hpp"
#include "ledits/model.hpp"
#include "ledits/schedule.hpp"

namespace ledits {

// ---------------------------------------------------------------------------------------------
// Solver convergence against the closed-form posterior of a single isotropic Gaussian.

/// Law of the solver endpoint for a single-Gaussian oracle, started from a constant x_T.
/// The solver is affine in its noise inputs, so mean and variance are exact.
struct EndpointLaw {
  double mean = 0.0;
  double variance = 0.0;
};

/// Data N(mu, s^2 I) noised to step T: x0 | x_T is N(m*, v*) elementwise.
EndpointLaw gaussian_posterior(const NoiseSchedule& schedule, double mu, double s, double x_T);

/// Exact endpoint law of the multistep SDE solver over a uniform `steps`-entry grid.
EndpointLaw sde_solver_law(const NoiseSchedule& schedule, double mu, double s, double x_T,
                           int steps);

/// Endpoint of eta = 0 ancestral stepping (a point mass).
double ddim_endpoint(const NoiseSchedule& schedule, double mu, double s, double x_T, int steps);

/// 2-Wasserstein distance between N(m1, v1) and N(m2, v2).
double w2_gaussian(const EndpointLaw& a, const EndpointLaw& b);

struct ConvergenceRow {
  int steps = 0;
  double sde_w2 = 0.0;
  double sde_mean_error = 0.0;
  double sde_std = 0.0;
  double ddim_w2 = 0.0;  // comparison row, not asserted
};

std::vector<ConvergenceRow> convergence_table(const NoiseSchedule& schedule, double mu, double s,
                                              double x_T, std::span<const int> step_counts);

/// True when sde_w2 strictly decreases down the table.
bool strictly_decreasing(const std::vector<ConvergenceRow>& rows);

// ---------------------------------------------------------------------------------------------
// Reconstruction baselines.

/// Edit-friendly inversion and unguided regeneration; RMSE against x0.
double edit_friendly_roundtrip_rmse(const Field& x0, const DenoiserModel& model,
                                    const NoiseSchedule& schedule, const TimestepGrid& grid,
                                    std::uint64_t seed);

/// DDIM inversion followed by eta = 0 regeneration over a uniform grid; RMSE against x0.
double ddim_roundtrip_rmse(const Field& x0, const DenoiserModel& model,
                           const NoiseSchedule& schedule, int steps);

// ---------------------------------------------------------------------------------------------
// Analytic fixtures.

/// Single isotropic Gaussian N(mu, s^2 I) as a one-component mixture.
GmmSpec single_gaussian_spec(Shape shape, double mu, double s);

/// Four-component mixture {base, A, B, A+B} with equal weights and scales. Component 1 raises
/// region A by `lift`, component 2 region B, component 3 both. Concept A is {1, 3} and concept B
/// is {2, 3}; with disjoint regions the density factorises over the two regions.
GmmSpec product_concept_spec(const Field& base_mean, const Field& region_a,
                             const Field& region_b, double lift, double scale);

/// Deterministic draw from component `k` of a mixture (inputs domain, stream = index).
Field sample_component(const GmmSpec& spec, std::size_t k, std::uint64_t seed,
                       std::uint32_t index);

// ---------------------------------------------------------------------------------------------
// Editing runs over a latent cache.

/// Runs generation from the cache with the given edits. Zero edits reproduce x0.
Field run_edit(const EditFriendlyLatents& latents, const DenoiserModel& model,
               const NoiseSchedule& schedule, const std::vector<EditInstruction>& edits,
               std::vector<ConceptMasks>* masks = nullptr,
               const Conditioning* inversion_conditioning = nullptr);

struct SweepRow {
  double scale = 0.0;
  double projection = 0.0;
};

/// Projection of (edit_s - reconstruction) onto the unit direction of the largest-scale delta.
/// Every instruction's scale is replaced by each grid value in turn.
std::vector<SweepRow> scale_sweep(const EditFriendlyLatents& latents, const DenoiserModel& model,
                                  const NoiseSchedule& schedule,
                                  const std::vector<EditInstruction>& edits,
                                  std::span<const double> scales);

/// Index of the first increment with projection[i+1] < projection[i] - tolerance, or -1.
int first_decrease(const std::vector<SweepRow>& rows, double tolerance);

/// Evaluation-count contract: inversion steps + generation steps * (1 + concepts).
std::uint64_t predicted_evaluations(std::size_t inversion_steps, std::size_t generation_steps,
                                    std::size_t concepts);

// ---------------------------------------------------------------------------------------------
// Marginal check.

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;  // pooled over elements, unbiased
  std::vector<double> channel_mean;
  std::vector<double> channel_variance;
};

/// Ancestral sampling from N(0, I) over the full schedule; pooled moments of the endpoints.
SampleMoments ancestral_sample_moments(const DenoiserModel& model, const NoiseSchedule& schedule,
                                       double eta, int samples, std::uint64_t seed);

}  // namespace ledits
