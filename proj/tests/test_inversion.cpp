#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"
#include "ledits/experiments.hpp"
#include "ledits/inversion.hpp"
#include "ledits/random.hpp"

using namespace ledits;
namespace fs = std::filesystem;

namespace {

const NoiseSchedule& schedule() {
  static const auto s = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  return s;
}

const Shape kShape{1, 8, 8};

const GmmDenoiser& gaussian_model() {
  static const GmmDenoiser m(single_gaussian_spec(kShape, 0.5, 0.6), schedule());
  return m;
}

Field input(std::uint32_t k) {
  return sample_component(gaussian_model().spec(), 0, 2024, k);
}

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::path(LEDITS_TEST_TMP) / "inversion";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("zero input gives the scaled reconstruction noise at each grid step") {
  const auto grid = TimestepGrid::uniform(1000, 10);
  const auto seq = build_reconstruction_sequence(Field(kShape), schedule(), grid, 3);
  REQUIRE(seq.size() == grid.size() + 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int t = grid.steps[i];
    const Field e = gaussian_field(3, NoiseDomain::reconstruction, static_cast<std::uint32_t>(t), kShape);
    CHECK(rmse(seq[i], scaled(e, static_cast<float>(schedule().noise(t)))) < 1e-7);
  }
  CHECK(bitwise_equal(seq.back(), Field(kShape)));
}

TEST_CASE("near t = 0 the auxiliary state approaches x0") {
  const Field x0 = input(0);
  const auto grid = TimestepGrid::from_steps(1000, {500, 1});
  const auto seq = build_reconstruction_sequence(x0, schedule(), grid, 1);
  CHECK(rmse(seq[1], x0) < 0.05);
}

TEST_CASE("auxiliary noises at consecutive steps are uncorrelated") {
  const Shape big{1, 100, 100};
  const auto grid = TimestepGrid::uniform(1000, 50);
  const auto seq = build_reconstruction_sequence(Field(big), schedule(), grid, 11);
  for (std::size_t i : {0ul, 20ul, 47ul}) {
    const Field a = scaled(seq[i], static_cast<float>(1.0 / schedule().noise(grid.steps[i])));
    const Field b = scaled(seq[i + 1], static_cast<float>(1.0 / schedule().noise(grid.steps[i + 1])));
    double sab = 0, saa = 0, sbb = 0, ma = 0, mb = 0;
    const double n = static_cast<double>(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) { ma += a[k]; mb += b[k]; }
    ma /= n;
    mb /= n;
    for (std::size_t k = 0; k < a.size(); ++k) {
      sab += (a[k] - ma) * (b[k] - mb);
      saa += (a[k] - ma) * (a[k] - ma);
      sbb += (b[k] - mb) * (b[k] - mb);
    }
    CHECK(std::fabs(sab / std::sqrt(saa * sbb)) < 0.05);
  }
}

TEST_CASE("edit-friendly round trip reproduces x0 and the last step carries a residual") {
  const Field x0 = input(1);
  const auto grid = TimestepGrid::uniform(1000, 20);
  CountingModel counter(gaussian_model());
  const auto latents = invert(x0, counter, schedule(), grid, 9);
  CHECK(counter.evaluations() == 20);
  CHECK(latents.z_seq.size() == 20);
  REQUIRE(latents.residuals.size() == 1);
  CHECK(latents.residuals[0].executed_step == 19);
  CHECK(bitwise_equal(latents.z_seq.back(), Field(kShape)));
  CHECK(rmse(reconstruct(latents, gaussian_model(), schedule()), x0) <= 1e-5);

  double z_power = 0;
  for (std::size_t j = 0; j + 1 < latents.z_seq.size(); ++j) z_power += mean_square(latents.z_seq[j]);
  MESSAGE("mean |z|^2 / N over stochastic steps: " << z_power / 19.0);
}

TEST_CASE("skip start still reconstructs exactly") {
  const Field x0 = input(2);
  for (double skip : {0.1, 0.2}) {
    const auto grid = TimestepGrid::uniform(1000, 50, skip);
    const auto latents = invert(x0, gaussian_model(), schedule(), grid, 4);
    CHECK(latents.z_seq.size() == grid.executed_count());
    CHECK(rmse(reconstruct(latents, gaussian_model(), schedule()), x0) <= 1e-5);
  }
}

TEST_CASE("different seeds give different noise maps and both reconstruct") {
  const Field x0 = input(3);
  const auto grid = TimestepGrid::uniform(1000, 20);
  const auto a = invert(x0, gaussian_model(), schedule(), grid, 1);
  const auto b = invert(x0, gaussian_model(), schedule(), grid, 2);
  CHECK(!bitwise_equal(a.z_seq[3], b.z_seq[3]));
  CHECK(rmse(reconstruct(a, gaussian_model(), schedule()), x0) <= 1e-5);
  CHECK(rmse(reconstruct(b, gaussian_model(), schedule()), x0) <= 1e-5);
}

TEST_CASE("DDIM baseline error shrinks with steps and stays far above edit-friendly error") {
  const Field x0 = input(4);
  const double d10 = ddim_roundtrip_rmse(x0, gaussian_model(), schedule(), 10);
  const double d50 = ddim_roundtrip_rmse(x0, gaussian_model(), schedule(), 50);
  const double d200 = ddim_roundtrip_rmse(x0, gaussian_model(), schedule(), 200);
  CHECK(d10 > d50);
  CHECK(d50 > d200);
  const double ef = edit_friendly_roundtrip_rmse(x0, gaussian_model(), schedule(),
                                                 TimestepGrid::uniform(1000, 50), 1);
  CHECK(d50 > 10 * ef);
}

TEST_CASE("DDIM inversion of a mixture mean stays finite") {
  const Field x_T = ddim_invert(Field(kShape, 0.5f), gaussian_model(), schedule(), 25);
  CHECK(x_T.all_finite());
}

TEST_CASE("LPL1 save and load is bit-exact and regenerates x0") {
  const Field x0 = input(5);
  const auto grid = TimestepGrid::uniform(1000, 20, 0.25);
  const auto latents = invert(x0, gaussian_model(), schedule(), grid, 6);
  const fs::path p = tmp("roundtrip.lpl");
  save_latents(latents, p);
  const auto back = load_latents(p);
  REQUIRE(back.x_seq.size() == latents.x_seq.size());
  for (std::size_t i = 0; i < back.x_seq.size(); ++i) CHECK(bitwise_equal(back.x_seq[i], latents.x_seq[i]));
  for (std::size_t j = 0; j < back.z_seq.size(); ++j) CHECK(bitwise_equal(back.z_seq[j], latents.z_seq[j]));
  REQUIRE(back.residuals.size() == latents.residuals.size());
  CHECK(bitwise_equal(back.residuals[0].delta, latents.residuals[0].delta));
  CHECK(back.grid.steps == latents.grid.steps);
  CHECK(back.grid.start_index == latents.grid.start_index);
  CHECK(back.seed == 6);
  CHECK(bitwise_equal(reconstruct(back, gaussian_model(), schedule()),
                      reconstruct(latents, gaussian_model(), schedule())));
}

TEST_CASE("stale and corrupt caches are rejected") {
  const Field x0 = input(6);
  const auto latents = invert(x0, gaussian_model(), schedule(), TimestepGrid::uniform(1000, 10), 1);
  const fs::path p = tmp("stale.lpl");
  save_latents(latents, p);
  CHECK_NOTHROW(load_latents_for(p, schedule(), gaussian_model()));

  const GmmDenoiser other(single_gaussian_spec(kShape, 0.5, 0.61), schedule());
  CHECK_THROWS_AS(load_latents_for(p, schedule(), other), StaleCacheError);
  const auto other_schedule = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.021);
  CHECK_THROWS_AS(load_latents_for(p, other_schedule, gaussian_model()), StaleCacheError);

  auto bytes = io::read_file(p);
  bytes[0] = 'X';
  const fs::path bad = tmp("bad_magic.lpl");
  io::write_file_atomic(bad, bytes);
  CHECK_THROWS_AS(load_latents(bad), FormatError);

  bytes = io::read_file(p);
  bytes.resize(bytes.size() - 5);
  const fs::path truncated = tmp("truncated.lpl");
  io::write_file_atomic(truncated, bytes);
  CHECK_THROWS_AS(load_latents(truncated), FormatError);
}
