#include "ledits/sampler.hpp"

#include <cmath>

#include "ledits/error.hpp"
#include "ledits/random.hpp"

namespace ledits {

Field predict_clean(const NoiseSchedule& schedule, const Field& x_t, const Field& eps, int t) {
  require_same_shape(x_t.shape(), eps.shape(), "predict_clean");
  const double a = schedule.signal(t);
  const double s = schedule.noise(t);
  Field out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(x_t[i]) - s * eps[i]) / a);
  }
  return out;
}

Field step_ancestral(const NoiseSchedule& schedule, const Field& x_t, const Field& eps_hat, int t,
                     int t_prev, double eta, const Field& z) {
  require_same_shape(x_t.shape(), eps_hat.shape(), "step_ancestral eps");
  require_same_shape(x_t.shape(), z.shape(), "step_ancestral z");
  const double sigma = sigma_ancestral(schedule, t, t_prev, eta);
  const double a_t = schedule.signal(t);
  const double s_t = schedule.noise(t);
  const double a_prev = schedule.signal(t_prev);
  double dir_var = 1.0 - schedule.alpha_bar(t_prev) - sigma * sigma;
  if (dir_var < -1e-12) {
    throw InternalError("ancestral step: sigma^2 exceeds 1 - alpha_bar_prev");
  }
  const double dir = std::sqrt(std::max(dir_var, 0.0));

  Field out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = eps_hat[i];
    const double clean = (static_cast<double>(x_t[i]) - s_t * e) / a_t;
    double v = a_prev * clean + dir * e;
    if (sigma != 0.0) v += sigma * z[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

StepMean dpmpp_2m_sde_mean(const NoiseSchedule& schedule, const Field& x_t, const Field& denoised,
                           const Field* denoised_prev, int t, int t_prev,
                           std::optional<int> t_next) {
  require_same_shape(x_t.shape(), denoised.shape(), "dpmpp step denoised");
  if (denoised_prev != nullptr) {
    require_same_shape(x_t.shape(), denoised_prev->shape(), "dpmpp step previous denoised");
    if (!t_next) throw ParameterError("dpmpp step: previous estimate given without its timestep");
  }
  if (t_prev == 0) return {denoised, 0.0};
  if (t_prev >= t) {
    throw PipelineError("degenerate grid: step " + std::to_string(t) + " -> " +
                        std::to_string(t_prev) + " has h = 0");
  }

  const double h = h_step(schedule, t_prev, t);
  if (!(h > 0.0)) throw PipelineError("degenerate grid: zero half-log-SNR step");
  const double decay = std::exp(-h);
  const double gain = -std::expm1(-2.0 * h);
  const double carry = schedule.noise(t_prev) / schedule.noise(t) * decay;
  const double a_prev = schedule.signal(t_prev);
  const double first = a_prev * gain;

  double correction = 0.0;
  if (denoised_prev != nullptr) {
    const double h_last = h_step(schedule, t, *t_next);
    if (!(h_last > 0.0)) throw PipelineError("degenerate grid: zero previous step");
    correction = 0.5 * a_prev * gain * (-h_last / h);
  }

  Field mean(x_t.shape());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double d = denoised[i];
    double v = carry * x_t[i] + first * d;
    if (denoised_prev != nullptr) v += correction * (static_cast<double>((*denoised_prev)[i]) - d);
    mean[i] = static_cast<float>(v);
  }
  return {std::move(mean), schedule.noise(t_prev) * std::sqrt(gain)};
}

Field step_dpmpp_2m_sde(const NoiseSchedule& schedule, const Field& x_t, const Field& denoised,
                        const Field* denoised_prev, int t, int t_prev, std::optional<int> t_next,
                        const Field& z) {
  require_same_shape(x_t.shape(), z.shape(), "dpmpp step z");
  StepMean m = dpmpp_2m_sde_mean(schedule, x_t, denoised, denoised_prev, t, t_prev, t_next);
  if (m.sigma == 0.0) return std::move(m.mean);
  Field out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(m.mean[i]) + m.sigma * z[i]);
  }
  return out;
}

Field StoredNoise::next(std::size_t executed_step, Shape shape) {
  if (executed_step >= maps_.size()) {
    throw PipelineError("noise source exhausted at executed step " +
                        std::to_string(executed_step) + " (" + std::to_string(maps_.size()) +
                        " maps stored)");
  }
  const Field& z = maps_[executed_step];
  require_same_shape(z.shape(), shape, "stored noise map");
  return z;
}

const Field* StoredNoise::residual(std::size_t executed_step) const {
  for (const StepResidual& r : residuals_) {
    if (r.executed_step == executed_step) return &r.delta;
  }
  return nullptr;
}

Field SeededNoise::next(std::size_t executed_step, Shape shape) {
  return gaussian_field(seed_, NoiseDomain::sampling, static_cast<std::uint32_t>(executed_step),
                        shape);
}

Field generate(const DenoiserModel& model, const NoiseSchedule& schedule, const TimestepGrid& grid,
               const GuidanceFn& guidance, NoiseSource& noise, const Field& x_start,
               const Conditioning* base) {
  Field x = x_start;
  std::optional<Field> prev_denoised;
  std::optional<int> prev_t;
  for (std::size_t i = grid.start_index; i < grid.size(); ++i) {
    const std::size_t executed = i - grid.start_index;
    const int t = grid.steps[i];
    const int t_prev = grid.next_step(i);
    Field eps_base = model.eps(x, t, base).eps;
    Field eps = guidance ? guidance(GuidanceContext{x, t, executed, eps_base}) : std::move(eps_base);
    Field denoised = predict_clean(schedule, x, eps, t);
    Field z = noise.next(executed, x.shape());
    x = step_dpmpp_2m_sde(schedule, x, denoised, prev_denoised ? &*prev_denoised : nullptr, t,
                          t_prev, prev_t, z);
    if (const Field* delta = noise.residual(executed)) {
      require_same_shape(delta->shape(), x.shape(), "step residual");
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += (*delta)[k];
    }
    prev_denoised = std::move(denoised);
    prev_t = t;
  }
  return x;
}

Field generate_ancestral(const DenoiserModel& model, const NoiseSchedule& schedule,
                         const TimestepGrid& grid, double eta, NoiseSource& noise,
                         const Field& x_start, const Conditioning* base) {
  Field x = x_start;
  for (std::size_t i = grid.start_index; i < grid.size(); ++i) {
    const int t = grid.steps[i];
    const Field eps = model.eps(x, t, base).eps;
    const std::size_t executed = i - grid.start_index;
    const Field z = noise.next(executed, x.shape());
    x = step_ancestral(schedule, x, eps, t, grid.next_step(i), eta, z);
    if (const Field* delta = noise.residual(executed)) {
      require_same_shape(delta->shape(), x.shape(), "step residual");
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += (*delta)[k];
    }
  }
  return x;
}

}  // namespace ledits
