#include <cmath>

#include "doctest.h"
#include "ledits/error.hpp"
#include "ledits/schedule.hpp"

using namespace ledits;

namespace {

double lambda_of(double ab) { return std::log(std::sqrt(ab)) - std::log(std::sqrt(1.0 - ab)); }

}  // namespace

TEST_CASE("two-step linear schedule matches the hand cumulative product") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 2, 0.1, 0.2);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("T=1000 linear schedule: first value and strict monotonicity against a running product") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-14));
  double running = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    running *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
    CHECK(std::fabs(s.alpha_bar(t) - running) <= 4 * std::numeric_limits<double>::epsilon() * running + 1e-300);
    if (t > 1) {
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.half_log_snr(t) < s.half_log_snr(t - 1));
    }
  }
}

TEST_CASE("scaled-linear schedule interpolates sqrt(beta)") {
  const auto s = NoiseSchedule::build(ScheduleKind::scaled_linear, 3, 0.01, 0.04);
  CHECK(s.beta(1) == doctest::Approx(0.01));
  CHECK(s.beta(2) == doctest::Approx(std::pow(0.15, 2)));
  CHECK(s.beta(3) == doctest::Approx(0.04));
}

TEST_CASE("schedule parameter errors") {
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleKind::linear, 1, 0.1, 0.2), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleKind::linear, 10, 0.0, 0.2), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleKind::linear, 10, 0.3, 0.2), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleKind::linear, 10, 0.1, 1.0), ParameterError);
  CHECK_THROWS_AS(parse_schedule_kind("cosine"), ParameterError);
}

TEST_CASE("half-log-SNR vanishes where alpha_bar is one half") {
  CHECK(lambda_of(0.5) == 0.0);
  // A 2-step schedule with alpha_bar_1 = 0.5 exactly.
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 2, 0.5, 0.6);
  CHECK(s.half_log_snr(1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("sigma_ancestral: eta 0, hand value and final step") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 2, 0.1, 0.2);
  CHECK(sigma_ancestral(s, 2, 1, 0.0) == 0.0);
  const double expected = std::sqrt((1 - 0.9) / (1 - 0.72) * (1 - 0.72 / 0.9));
  CHECK(sigma_ancestral(s, 2, 1, 1.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(sigma_ancestral(s, 1, 0, 1.0) == 0.0);
}

TEST_CASE("sigma_ancestral at eta 1 equals the DDPM posterior standard deviation on a grid") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  const auto grid = TimestepGrid::uniform(1000, 37);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const int t = grid.steps[i], tp = grid.steps[i + 1];
    const double ab = s.alpha_bar(t), abp = s.alpha_bar(tp);
    const double beta_tilde = (1 - abp) / (1 - ab) * (1 - ab / abp);
    CHECK(sigma_ancestral(s, t, tp, 1.0) == doctest::Approx(std::sqrt(beta_tilde)).epsilon(1e-12));
  }
}

TEST_CASE("h_step: zero, hand value, additivity and ordering") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 2, 0.1, 0.2);
  CHECK(h_step(s, 1, 1) == 0.0);
  const double h = h_step(s, 1, 2);
  CHECK(h == doctest::Approx(lambda_of(0.9) - lambda_of(0.72)).epsilon(1e-14));
  CHECK(h == doctest::Approx(0.627).epsilon(1e-3));
  CHECK_THROWS_AS(h_step(s, 2, 1), ParameterError);

  const auto big = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  CHECK(h_step(big, 10, 700) == doctest::Approx(h_step(big, 10, 300) + h_step(big, 300, 700)).epsilon(1e-12));
}

TEST_CASE("sigma_dpmpp: hand value and degenerate cases") {
  const auto s = NoiseSchedule::build(ScheduleKind::linear, 2, 0.1, 0.2);
  const double h = lambda_of(0.9) - lambda_of(0.72);
  CHECK(sigma_dpmpp(s, 2, 1) ==
        doctest::Approx(std::sqrt(1 - 0.9) * std::sqrt(1 - std::exp(-2 * h))).epsilon(1e-14));
  CHECK(sigma_dpmpp(s, 1, 0) == 0.0);  // alpha_bar_0 = 1
}

TEST_CASE("uniform grid spans T..1 and resolves the skip start") {
  const auto g = TimestepGrid::uniform(1000, 50);
  CHECK(g.steps.front() == 1000);
  CHECK(g.steps.back() == 1);
  CHECK(g.start_index == 0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.steps[i] < g.steps[i - 1]);
  CHECK(g.next_step(g.size() - 1) == 0);

  const auto skipped = TimestepGrid::uniform(50, 50, 0.2);
  CHECK(skipped.start_step() == 40);
  CHECK(skipped.executed_count() == 40);

  const auto coarse = TimestepGrid::uniform(1000, 20, 0.25);
  CHECK(coarse.start_step() <= 750);
  CHECK(coarse.steps[coarse.start_index - 1] > 750);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(TimestepGrid::from_steps(10, {10, 10, 1}), ParameterError);
  CHECK_THROWS_AS(TimestepGrid::from_steps(10, {11, 5, 1}), ParameterError);
  CHECK_THROWS_AS(TimestepGrid::from_steps(10, {1, 5}), ParameterError);
  CHECK_THROWS_AS(TimestepGrid::uniform(10, 5, 1.0), ParameterError);
  CHECK_THROWS_AS(TimestepGrid::uniform(10, 11), ParameterError);
}

TEST_CASE("schedule fingerprints separate parameters") {
  const auto a = NoiseSchedule::build(ScheduleKind::linear, 100, 1e-4, 0.02);
  const auto b = NoiseSchedule::build(ScheduleKind::linear, 100, 1e-4, 0.021);
  const auto c = NoiseSchedule::build(ScheduleKind::linear, 100, 1e-4, 0.02);
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() == c.fingerprint());
}
