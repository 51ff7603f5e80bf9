#include <cmath>

#include "doctest.h"
#include "ledits/error.hpp"
#include "ledits/experiments.hpp"
#include "ledits/random.hpp"
#include "ledits/sampler.hpp"

using namespace ledits;

namespace {

const NoiseSchedule& schedule() {
  static const auto s = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  return s;
}

const Shape kShape{2, 4, 4};

Field randn(std::uint32_t stream) { return gaussian_field(77, NoiseDomain::inputs, stream, kShape); }

}  // namespace

TEST_CASE("DDIM step with the true shared noise lands exactly on x_{t_prev}") {
  const Field x0 = randn(0), eps = randn(1);
  const int t = 600, tp = 550;
  Field x_t(kShape), x_p(kShape);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    x_t[i] = static_cast<float>(schedule().signal(t) * x0[i] + schedule().noise(t) * eps[i]);
    x_p[i] = static_cast<float>(schedule().signal(tp) * x0[i] + schedule().noise(tp) * eps[i]);
  }
  CHECK(rmse(step_ancestral(schedule(), x_t, eps, t, tp, 0.0, randn(2)), x_p) < 1e-6);
}

TEST_CASE("eta 0 ancestral step ignores z bitwise") {
  const Field x = randn(3), e = randn(4);
  const Field a = step_ancestral(schedule(), x, e, 700, 650, 0.0, randn(5));
  const Field b = step_ancestral(schedule(), x, e, 700, 650, 0.0, randn(6));
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("eta 1 with z = 0 is the mean; z shifts it by sigma z") {
  const Field x = randn(7), e = randn(8);
  const Field mean = step_ancestral(schedule(), x, e, 700, 650, 1.0, Field(kShape));
  const Field z = randn(9);
  const Field noisy = step_ancestral(schedule(), x, e, 700, 650, 1.0, z);
  const double sigma = sigma_ancestral(schedule(), 700, 650, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(noisy[i] - mean[i] == doctest::Approx(sigma * z[i]).epsilon(1e-4));
  }
}

TEST_CASE("final ancestral step returns the clean prediction") {
  const Field x = randn(10), e = randn(11);
  const Field out = step_ancestral(schedule(), x, e, 20, 0, 1.0, randn(12));
  CHECK(rmse(out, predict_clean(schedule(), x, e, 20)) < 1e-6);
}

TEST_CASE("2M step with a zero correction equals the first-order step bitwise") {
  const Field x = randn(13), d = randn(14), z = randn(15);
  for (int t : {900, 500, 40}) {
    const Field first = step_dpmpp_2m_sde(schedule(), x, d, nullptr, t, t - 30, std::nullopt, z);
    const Field second = step_dpmpp_2m_sde(schedule(), x, d, &d, t, t - 30, t + 30, z);
    CHECK(bitwise_equal(first, second));
  }
}

TEST_CASE("2M step mean matches an independent scalar evaluation") {
  const Field x = randn(16), d = randn(17), dp = randn(18);
  const int tn = 800, t = 760, tp = 720;
  const StepMean m = dpmpp_2m_sde_mean(schedule(), x, d, &dp, t, tp, tn);
  auto lam = [](double ab) { return 0.5 * std::log(ab / (1 - ab)); };
  const double ab = schedule().alpha_bar(t), abp = schedule().alpha_bar(tp), abn = schedule().alpha_bar(tn);
  const double h = lam(abp) - lam(ab), h_last = lam(ab) - lam(abn);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect = std::sqrt(1 - abp) / std::sqrt(1 - ab) * std::exp(-h) * x[i] +
                          std::sqrt(abp) * (1 - std::exp(-2 * h)) * d[i] +
                          0.5 * std::sqrt(abp) * (1 - std::exp(-2 * h)) * (-h_last / h) * (dp[i] - d[i]);
    CHECK(m.mean[i] == doctest::Approx(expect).epsilon(1e-5));
  }
  CHECK(m.sigma == doctest::Approx(std::sqrt(1 - abp) * std::sqrt(1 - std::exp(-2 * h))).epsilon(1e-12));
}

TEST_CASE("2M step into t = 0 returns the clean prediction with zero sigma") {
  const Field x = randn(19), d = randn(20);
  const StepMean m = dpmpp_2m_sde_mean(schedule(), x, d, nullptr, 5, 0, std::nullopt);
  CHECK(bitwise_equal(m.mean, d));
  CHECK(m.sigma == 0.0);
}

TEST_CASE("2M step rejects degenerate grids") {
  const Field x = randn(21);
  CHECK_THROWS_AS(dpmpp_2m_sde_mean(schedule(), x, x, nullptr, 5, 5, std::nullopt), PipelineError);
  CHECK_THROWS_AS(dpmpp_2m_sde_mean(schedule(), x, x, &x, 5, 4, std::nullopt), ParameterError);
}

TEST_CASE("a one-entry grid runs a single bootstrap step") {
  const GmmDenoiser model(single_gaussian_spec(kShape, 0.1, 0.5), schedule());
  CountingModel counter(model);
  const auto grid = TimestepGrid::from_steps(1000, {300});
  ZeroNoise zero;
  const Field x = randn(22);
  const Field out = generate(counter, schedule(), grid, {}, zero, x);
  CHECK(counter.evaluations() == 1);
  const Field eps = model.eps(x, 300, nullptr).eps;
  CHECK(bitwise_equal(out, predict_clean(schedule(), x, eps, 300)));
}

TEST_CASE("generation is deterministic for a fixed seed and stored noise runs out loudly") {
  const GmmDenoiser model(single_gaussian_spec(kShape, 0.1, 0.5), schedule());
  const auto grid = TimestepGrid::uniform(1000, 12);
  const Field x = randn(23);
  SeededNoise n1(5), n2(5);
  CHECK(bitwise_equal(generate(model, schedule(), grid, {}, n1, x),
                      generate(model, schedule(), grid, {}, n2, x)));
  std::vector<Field> short_maps(3, Field(kShape));
  StoredNoise stored(short_maps);
  CHECK_THROWS_AS(generate(model, schedule(), grid, {}, stored, x), PipelineError);
}

TEST_CASE("convergence oracle: closed-form posterior and solver law") {
  const auto law = gaussian_posterior(schedule(), 0.5, 0.6, 1.25);
  const double a = schedule().signal(1000), v = 1 - schedule().alpha_bar(1000);
  CHECK(law.variance == doctest::Approx(0.36 * v / (a * a * 0.36 + v)));
  CHECK(w2_gaussian({0, 4}, {3, 0}) == doctest::Approx(std::sqrt(9.0 + 4.0)));
  const auto coarse = sde_solver_law(schedule(), 0.5, 0.6, 1.25, 4);
  const auto fine = sde_solver_law(schedule(), 0.5, 0.6, 1.25, 64);
  CHECK(w2_gaussian(fine, law) < w2_gaussian(coarse, law));
  CHECK(w2_gaussian(sde_solver_law(schedule(), 0.5, 0.6, 1.25, 16), law) ==
        w2_gaussian(sde_solver_law(schedule(), 0.5, 0.6, 1.25, 16), law));
}
