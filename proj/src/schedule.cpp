#include "ledits/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ledits/error.hpp"

namespace ledits {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "scaled-linear" || name == "scaled_linear") return ScheduleKind::scaled_linear;
  throw ParameterError("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "scaled-linear";
}

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, int steps, double beta_min, double beta_max) {
  if (steps < 2) throw ParameterError("schedule needs T >= 2, got " + std::to_string(steps));
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ParameterError("schedule needs 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.kind_ = kind;
  s.steps_ = steps;
  s.beta_min_ = beta_min;
  s.beta_max_ = beta_max;
  s.beta_.assign(steps + 1, 0.0);
  s.alpha_bar_.assign(steps + 1, 1.0);
  s.lambda_.assign(steps + 1, std::numeric_limits<double>::infinity());

  const double denom = static_cast<double>(steps - 1);
  for (int t = 1; t <= steps; ++t) {
    const double frac = static_cast<double>(t - 1) / denom;
    if (kind == ScheduleKind::linear) {
      s.beta_[t] = beta_min + frac * (beta_max - beta_min);
    } else {
      const double r = std::sqrt(beta_min) + frac * (std::sqrt(beta_max) - std::sqrt(beta_min));
      s.beta_[t] = r * r;
    }
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
    if (!(s.alpha_bar_[t] > 0.0)) throw ParameterError("alpha_bar underflowed to zero");
    s.lambda_[t] = 0.5 * std::log(s.alpha_bar_[t]) - 0.5 * std::log1p(-s.alpha_bar_[t]);
  }

  Fingerprinter fp;
  fp.text("ledits.schedule.v1").text(to_string(kind)).u32(static_cast<std::uint32_t>(steps));
  fp.f64(beta_min).f64(beta_max);
  for (int t = 1; t <= steps; ++t) fp.f64(s.beta_[t]);
  s.fingerprint_ = fp.finish();
  return s;
}

void NoiseSchedule::check_step(int t, int lowest) const {
  if (t < lowest || t > steps_) {
    throw ParameterError("timestep " + std::to_string(t) + " outside [" + std::to_string(lowest) +
                         ", " + std::to_string(steps_) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check_step(t, 1);
  return beta_[t];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_step(t, 0);
  return alpha_bar_[t];
}

double NoiseSchedule::half_log_snr(int t) const {
  check_step(t, 0);
  return lambda_[t];
}

double NoiseSchedule::signal(int t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::noise(int t) const {
  check_step(t, 0);
  return std::sqrt(-std::expm1(std::log(alpha_bar_[t])));
}

double sigma_ancestral(const NoiseSchedule& schedule, int t, int t_prev, double eta) {
  if (!(t > t_prev && t_prev >= 0)) {
    throw ParameterError("sigma_ancestral needs t > t_prev >= 0");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw ParameterError("eta must lie in [0, 1]");
  if (eta == 0.0) return 0.0;
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double beta_tilde = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
  return eta * std::sqrt(std::max(beta_tilde, 0.0));
}

double h_step(const NoiseSchedule& schedule, int t, int t_next) {
  if (t > t_next) {
    throw ParameterError("h_step needs t <= t_next (t is the less noisy step), got " +
                         std::to_string(t) + " > " + std::to_string(t_next));
  }
  if (t == t_next) return 0.0;
  return schedule.half_log_snr(t) - schedule.half_log_snr(t_next);
}

double sigma_dpmpp(const NoiseSchedule& schedule, int t, int t_prev) {
  if (t_prev < 0 || t_prev > t) throw ParameterError("sigma_dpmpp needs 0 <= t_prev <= t");
  if (t_prev == 0) return 0.0;
  const double h = h_step(schedule, t_prev, t);
  return schedule.noise(t_prev) * std::sqrt(-std::expm1(-2.0 * h));
}

namespace {

TimestepGrid finish_grid(int schedule_steps, std::vector<int> steps, double skip) {
  if (!(skip >= 0.0 && skip < 1.0)) throw ParameterError("grid skip must lie in [0, 1)");
  if (steps.empty()) throw ParameterError("grid needs at least one step");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > schedule_steps) {
      throw ParameterError("grid step " + std::to_string(steps[i]) + " outside [1, T]");
    }
    if (i > 0 && steps[i] >= steps[i - 1]) {
      throw ParameterError("grid steps must be unique and strictly decreasing");
    }
  }
  TimestepGrid grid;
  grid.steps = std::move(steps);
  grid.skip = skip;
  const long limit = std::lround((1.0 - skip) * schedule_steps);
  auto it = std::find_if(grid.steps.begin(), grid.steps.end(), [&](int s) { return s <= limit; });
  if (it == grid.steps.end()) throw ParameterError("skip leaves no executable grid step");
  grid.start_index = static_cast<std::size_t>(it - grid.steps.begin());
  return grid;
}

}  // namespace

TimestepGrid TimestepGrid::uniform(int schedule_steps, int count, double skip) {
  if (count < 1 || count > schedule_steps) {
    throw ParameterError("grid size must lie in [1, T], got " + std::to_string(count));
  }
  std::vector<int> steps;
  steps.reserve(count);
  if (count == 1) {
    steps.push_back(schedule_steps);
  } else {
    const double stride = static_cast<double>(schedule_steps - 1) / (count - 1);
    for (int i = 0; i < count; ++i) {
      steps.push_back(static_cast<int>(std::lround(schedule_steps - i * stride)));
    }
  }
  return finish_grid(schedule_steps, std::move(steps), skip);
}

TimestepGrid TimestepGrid::from_steps(int schedule_steps, std::vector<int> steps, double skip) {
  return finish_grid(schedule_steps, std::move(steps), skip);
}

}  // namespace ledits
