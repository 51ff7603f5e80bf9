#pragma once

#include <span>
#include <string>
#include <vector>

#include "ledits/fingerprint.hpp"

namespace ledits {

enum class ScheduleKind { linear, scaled_linear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Discrete variance schedule over t = 1..T. Index 0 denotes the clean state with alpha_bar = 1.
///
/// All derived quantities are held in double precision; fields stay 32-bit.
class NoiseSchedule {
 public:
  static NoiseSchedule build(ScheduleKind kind, int steps, double beta_min, double beta_max);

  ScheduleKind kind() const { return kind_; }
  int steps() const { return steps_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  /// Cumulative product of alpha up to t; alpha_bar(0) == 1.
  double alpha_bar(int t) const;
  /// ln sqrt(alpha_bar) - ln sqrt(1 - alpha_bar); +inf at t = 0.
  double half_log_snr(int t) const;

  /// sqrt(alpha_bar_t) and sqrt(1 - alpha_bar_t).
  double signal(int t) const;
  double noise(int t) const;

  const Digest& fingerprint() const { return fingerprint_; }

 private:
  NoiseSchedule() = default;
  void check_step(int t, int lowest) const;

  ScheduleKind kind_ = ScheduleKind::linear;
  int steps_ = 0;
  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
  std::vector<double> beta_;       // index t, beta_[0] unused
  std::vector<double> alpha_bar_;  // index t, alpha_bar_[0] = 1
  std::vector<double> lambda_;
  Digest fingerprint_{};
};

/// DDPM/DDIM-family standard deviation eta * sqrt(beta_tilde) for the step t -> t_prev.
double sigma_ancestral(const NoiseSchedule& schedule, int t, int t_prev, double eta);

/// Half-log-SNR increment lambda_t - lambda_t_next; t must not be noisier than t_next.
double h_step(const NoiseSchedule& schedule, int t, int t_next);

/// Multistep SDE solver noise scale sqrt(1 - alpha_bar_prev) * sqrt(1 - exp(-2 h)) for t -> t_prev.
double sigma_dpmpp(const NoiseSchedule& schedule, int t, int t_prev);

/// Reduced inference grid. Steps are strictly decreasing; the step after the last one is t = 0.
struct TimestepGrid {
  std::vector<int> steps;
  double skip = 0.0;
  std::size_t start_index = 0;

  /// Uniform grid over [1, T] with the first entry at T and the last at 1.
  static TimestepGrid uniform(int schedule_steps, int count, double skip = 0.0);
  /// Arbitrary descending grid; validates and resolves the skip start.
  static TimestepGrid from_steps(int schedule_steps, std::vector<int> steps, double skip = 0.0);

  std::size_t size() const { return steps.size(); }
  std::size_t executed_count() const { return steps.size() - start_index; }
  int start_step() const { return steps[start_index]; }
  /// Timestep following grid entry i (0 after the last entry).
  int next_step(std::size_t i) const { return i + 1 < steps.size() ? steps[i + 1] : 0; }
  /// Timestep preceding grid entry i on the noisy side, or -1 for the first entry.
  int previous_step(std::size_t i) const { return i == 0 ? -1 : steps[i - 1]; }
};

}  // namespace ledits
