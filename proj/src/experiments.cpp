#include "ledits/experiments.hpp"

#include <cmath>

#include "ledits/error.hpp"
#include "ledits/random.hpp"
#include "ledits/sampler.hpp"

namespace ledits {

namespace {

const Shape kScalar{1, 1, 1};

/// Unit impulse at one executed step, zero elsewhere.
class ImpulseNoise final : public NoiseSource {
 public:
  explicit ImpulseNoise(std::size_t step) : step_(step) {}
  Field next(std::size_t executed_step, Shape shape) override {
    return Field(shape, executed_step == step_ ? 1.0f : 0.0f);
  }

 private:
  std::size_t step_;
};

double dot(const Field& a, const Field& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

}  // namespace

EndpointLaw gaussian_posterior(const NoiseSchedule& schedule, double mu, double s, double x_T) {
  const int T = schedule.steps();
  const double a = schedule.signal(T);
  const double sig2 = 1.0 - schedule.alpha_bar(T);
  const double denom = a * a * s * s + sig2;
  return {mu + a * s * s / denom * (x_T - a * mu), s * s * sig2 / denom};
}

EndpointLaw sde_solver_law(const NoiseSchedule& schedule, double mu, double s, double x_T,
                           int steps) {
  const GmmDenoiser model(single_gaussian_spec(kScalar, mu, s), schedule);
  const TimestepGrid grid = TimestepGrid::uniform(schedule.steps(), steps);
  const Field start(kScalar, static_cast<float>(x_T));
  ZeroNoise zero;
  const double mean = generate(model, schedule, grid, {}, zero, start)[0];
  double variance = 0.0;
  for (std::size_t j = 0; j < grid.executed_count(); ++j) {
    ImpulseNoise impulse(j);
    const double b = generate(model, schedule, grid, {}, impulse, start)[0] - mean;
    variance += b * b;
  }
  return {mean, variance};
}

double ddim_endpoint(const NoiseSchedule& schedule, double mu, double s, double x_T, int steps) {
  const GmmDenoiser model(single_gaussian_spec(kScalar, mu, s), schedule);
  const TimestepGrid grid = TimestepGrid::uniform(schedule.steps(), steps);
  ZeroNoise zero;
  return generate_ancestral(model, schedule, grid, 0.0, zero,
                            Field(kScalar, static_cast<float>(x_T)))[0];
}

double w2_gaussian(const EndpointLaw& a, const EndpointLaw& b) {
  const double dm = a.mean - b.mean;
  const double ds = std::sqrt(std::max(a.variance, 0.0)) - std::sqrt(std::max(b.variance, 0.0));
  return std::sqrt(dm * dm + ds * ds);
}

std::vector<ConvergenceRow> convergence_table(const NoiseSchedule& schedule, double mu, double s,
                                              double x_T, std::span<const int> step_counts) {
  if (step_counts.empty()) throw ParameterError("convergence needs at least one step count");
  const EndpointLaw exact = gaussian_posterior(schedule, mu, s, x_T);
  std::vector<ConvergenceRow> rows;
  for (int n : step_counts) {
    const EndpointLaw law = sde_solver_law(schedule, mu, s, x_T, n);
    const EndpointLaw ddim{ddim_endpoint(schedule, mu, s, x_T, n), 0.0};
    rows.push_back({n, w2_gaussian(law, exact), std::fabs(law.mean - exact.mean),
                    std::sqrt(law.variance), w2_gaussian(ddim, exact)});
  }
  return rows;
}

bool strictly_decreasing(const std::vector<ConvergenceRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(rows[i].sde_w2 < rows[i - 1].sde_w2)) return false;
  }
  return true;
}

double edit_friendly_roundtrip_rmse(const Field& x0, const DenoiserModel& model,
                                    const NoiseSchedule& schedule, const TimestepGrid& grid,
                                    std::uint64_t seed) {
  const EditFriendlyLatents latents = invert(x0, model, schedule, grid, seed);
  return rmse(reconstruct(latents, model, schedule), x0);
}

double ddim_roundtrip_rmse(const Field& x0, const DenoiserModel& model,
                           const NoiseSchedule& schedule, int steps) {
  const Field x_T = ddim_invert(x0, model, schedule, steps);
  return rmse(ddim_generate(x_T, model, schedule, steps), x0);
}

GmmSpec single_gaussian_spec(Shape shape, double mu, double s) {
  GmmSpec spec;
  spec.components.push_back({Field(shape, static_cast<float>(mu)), s, 1.0});
  spec.validate();
  return spec;
}

GmmSpec product_concept_spec(const Field& base_mean, const Field& region_a,
                             const Field& region_b, double lift, double scale) {
  const Shape shape = base_mean.shape();
  require_same_shape(region_a.shape(), shape.spatial_shape(), "region A");
  require_same_shape(region_b.shape(), shape.spatial_shape(), "region B");
  if (!is_binary(region_a) || !is_binary(region_b)) throw ParameterError("regions must be binary");
  for (std::size_t p = 0; p < region_a.size(); ++p) {
    if (region_a[p] != 0.0f && region_b[p] != 0.0f) throw ParameterError("regions overlap");
  }
  const Field lift_a = multiply_spatial(Field(shape, static_cast<float>(lift)), region_a);
  const Field lift_b = multiply_spatial(Field(shape, static_cast<float>(lift)), region_b);
  GmmSpec spec;
  spec.components.push_back({base_mean, scale, 0.25});
  spec.components.push_back({base_mean + lift_a, scale, 0.25});
  spec.components.push_back({base_mean + lift_b, scale, 0.25});
  spec.components.push_back({base_mean + lift_a + lift_b, scale, 0.25});
  spec.validate();
  return spec;
}

Field sample_component(const GmmSpec& spec, std::size_t k, std::uint64_t seed,
                       std::uint32_t index) {
  if (k >= spec.components.size()) throw ParameterError("component index out of range");
  const GmmComponent& c = spec.components[k];
  const Field noise = gaussian_field(seed, NoiseDomain::inputs, index, c.mean.shape());
  Field x(c.mean.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(c.mean[i] + c.scale * noise[i]);
  }
  return x;
}

Field run_edit(const EditFriendlyLatents& latents, const DenoiserModel& model,
               const NoiseSchedule& schedule, const std::vector<EditInstruction>& edits,
               std::vector<ConceptMasks>* masks, const Conditioning* inversion_conditioning) {
  EditGuidance guidance(model, edits, masks != nullptr);
  StoredNoise noise(latents.z_seq, latents.residuals);
  GuidanceFn fn;
  if (!edits.empty()) fn = guidance.callback();
  Field out = generate(model, schedule, latents.grid, fn, noise, latents.start_state(),
                       inversion_conditioning);
  if (masks != nullptr) *masks = guidance.recorded();
  return out;
}

std::vector<SweepRow> scale_sweep(const EditFriendlyLatents& latents, const DenoiserModel& model,
                                  const NoiseSchedule& schedule,
                                  const std::vector<EditInstruction>& edits,
                                  std::span<const double> scales) {
  if (scales.size() < 3) throw ParameterError("scale sweep needs at least three scales");
  if (edits.empty()) throw ParameterError("scale sweep needs at least one edit");
  double top = scales[0];
  for (double s : scales) top = std::max(top, s);

  const Field recon = run_edit(latents, model, schedule, {});
  auto edit_at = [&](double s) {
    std::vector<EditInstruction> scaled_edits = edits;
    for (auto& e : scaled_edits) e.scale = s;
    return run_edit(latents, model, schedule, scaled_edits) - recon;
  };
  const Field top_delta = edit_at(top);
  const double norm = std::sqrt(dot(top_delta, top_delta));
  if (!(norm > 0.0)) throw PipelineError("largest scale produced no change; direction undefined");
  const Field direction = scaled(top_delta, static_cast<float>(1.0 / norm));

  std::vector<SweepRow> rows;
  for (double s : scales) {
    const Field delta = s == top ? top_delta : edit_at(s);
    rows.push_back({s, dot(delta, direction)});
  }
  return rows;
}

int first_decrease(const std::vector<SweepRow>& rows, double tolerance) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].projection < rows[i - 1].projection - tolerance) return static_cast<int>(i - 1);
  }
  return -1;
}

std::uint64_t predicted_evaluations(std::size_t inversion_steps, std::size_t generation_steps,
                                    std::size_t concepts) {
  return inversion_steps + generation_steps * (1 + concepts);
}

SampleMoments ancestral_sample_moments(const DenoiserModel& model, const NoiseSchedule& schedule,
                                       double eta, int samples, std::uint64_t seed) {
  if (samples < 2) throw ParameterError("moment estimation needs at least two samples");
  const Shape shape = model.input_shape();
  const TimestepGrid grid = TimestepGrid::uniform(schedule.steps(), schedule.steps());
  const std::size_t plane = shape.spatial();
  std::vector<double> sum(shape.channels, 0.0);
  std::vector<double> sum_sq(shape.channels, 0.0);
  for (int n = 0; n < samples; ++n) {
    const Field start =
        gaussian_field(seed, NoiseDomain::inputs, static_cast<std::uint32_t>(n), shape);
    SeededNoise noise(seed + 1 + static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ull);
    const Field x = generate_ancestral(model, schedule, grid, eta, noise, start);
    for (int c = 0; c < shape.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = x[c * plane + p];
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    }
  }
  SampleMoments m;
  const double per_channel = static_cast<double>(samples) * plane;
  double total = 0.0;
  double total_sq = 0.0;
  for (int c = 0; c < shape.channels; ++c) {
    const double mean = sum[c] / per_channel;
    m.channel_mean.push_back(mean);
    m.channel_variance.push_back((sum_sq[c] - per_channel * mean * mean) / (per_channel - 1.0));
    total += sum[c];
    total_sq += sum_sq[c];
  }
  const double count = per_channel * shape.channels;
  m.mean = total / count;
  m.variance = (total_sq - count * m.mean * m.mean) / (count - 1.0);
  return m;
}

}  // namespace ledits
