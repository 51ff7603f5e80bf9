#include <cmath>

#include "doctest.h"
#include "ledits/error.hpp"
#include "ledits/experiments.hpp"
#include "ledits/gmm_model.hpp"
#include "ledits/random.hpp"

using namespace ledits;

namespace {

const NoiseSchedule& schedule() {
  static const auto s = NoiseSchedule::build(ScheduleKind::linear, 1000, 1e-4, 0.02);
  return s;
}

Conditioning components(std::vector<int> k) {
  Conditioning c;
  c.concept_components = std::move(k);
  c.label = "test";
  return c;
}

}  // namespace

TEST_CASE("standard normal data: eps = sqrt(1 - ab) x") {
  const Shape shape{2, 3, 3};
  const GmmDenoiser model(single_gaussian_spec(shape, 0.0, 1.0), schedule());
  const Field x = gaussian_field(1, NoiseDomain::inputs, 0, shape);
  for (int t : {1, 250, 999}) {
    const Field e = model.eps(x, t, nullptr).eps;
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(e[i] == doctest::Approx(schedule().noise(t) * x[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("near point mass: eps recovers the injected forward noise") {
  const Shape shape{1, 4, 4};
  const double mu = 0.3;
  const GmmDenoiser model(single_gaussian_spec(shape, mu, 1e-6), schedule());
  const Field noise = gaussian_field(3, NoiseDomain::inputs, 1, shape);
  for (int t : {2, 100, 600, 1000}) {
    Field x(shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>(schedule().signal(t) * mu + schedule().noise(t) * noise[i]);
    }
    const Field e = model.eps(x, t, nullptr).eps;
    CHECK(rmse(e, noise) < 1e-4);
  }
}

TEST_CASE("far-separated components: restricting to the nearby one leaves eps unchanged") {
  const Shape shape{1, 2, 2};
  GmmSpec spec;
  spec.components.push_back({Field(shape, 0.0f), 0.05, 0.5});
  spec.components.push_back({Field(shape, 1.0f), 0.05, 0.5});  // 20 sigma away
  const GmmDenoiser model(spec, schedule());
  Field x0(shape, 0.01f);
  const int t = 5;
  Field x(shape);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(schedule().signal(t) * x0[i]);
  const auto r = gmm_responsibilities(spec, schedule(), x, t, {0, 1});
  CHECK(r[1] < 1e-12);
  const Conditioning c = components({0});
  const Field psi = model.eps(x, t, &c).eps - model.eps(x, t, nullptr).eps;
  CHECK(max_abs(psi) < 1e-6);
}

TEST_CASE("full concept set equals the unconditional estimate") {
  const Shape shape{1, 4, 4};
  const Field region_a = [&] {
    Field m(shape.spatial_shape());
    m.at(0, 0, 0) = m.at(0, 0, 1) = 1.0f;
    return m;
  }();
  Field region_b(shape.spatial_shape());
  region_b.at(0, 3, 3) = 1.0f;
  const GmmSpec spec = product_concept_spec(Field(shape, -0.5f), region_a, region_b, 1.5, 0.3);
  const GmmDenoiser model(spec, schedule());
  const Field x = gaussian_field(9, NoiseDomain::inputs, 2, shape);
  const Conditioning all = components({0, 1, 2, 3});
  CHECK(max_abs(model.eps(x, 300, &all).eps - model.eps(x, 300, nullptr).eps) < 1e-6);
}

TEST_CASE("responsibilities stay finite at extreme distances") {
  const Shape shape{1, 8, 8};
  GmmSpec spec;
  spec.components.push_back({Field(shape, -1e3f), 1e-3, 0.5});
  spec.components.push_back({Field(shape, 1e3f), 1e-3, 0.5});
  const Field x(shape, 0.0f);
  const auto r = gmm_responsibilities(spec, schedule(), x, 1, {0, 1});
  CHECK(std::isfinite(r[0]));
  CHECK(r[0] + r[1] == doctest::Approx(1.0));
  const GmmDenoiser model(spec, schedule());
  CHECK(model.eps(x, 1, nullptr).eps.all_finite());
}

TEST_CASE("mixture validation and conditioning errors") {
  const Shape shape{1, 2, 2};
  GmmSpec empty;
  CHECK_THROWS_AS(empty.validate(), ParameterError);
  GmmSpec bad_weights;
  bad_weights.components.push_back({Field(shape), 1.0, 0.7});
  CHECK_THROWS_AS(bad_weights.validate(), ParameterError);
  GmmSpec bad_scale;
  bad_scale.components.push_back({Field(shape), 0.0, 1.0});
  CHECK_THROWS_AS(bad_scale.validate(), ParameterError);

  const GmmDenoiser model(single_gaussian_spec(shape, 0.0, 1.0), schedule());
  const Field x(shape);
  const Conditioning none = components({});
  const Conditioning out_of_range = components({3});
  CHECK_THROWS_AS(model.eps(x, 10, &none), ParameterError);
  CHECK_THROWS_AS(model.eps(x, 10, &out_of_range), ParameterError);
  CHECK_THROWS_AS(model.eps(x, 0, nullptr), ParameterError);
  CHECK_THROWS_AS(model.eps(x, 1001, nullptr), ParameterError);
  CHECK_THROWS_AS(model.eps(Field(Shape{1, 3, 3}), 10, nullptr), ParameterError);
}

TEST_CASE("analytic model is deterministic and shape-preserving; it has no attention stash") {
  const Shape shape{3, 5, 4};
  const GmmDenoiser model(single_gaussian_spec(shape, 0.2, 0.7), schedule());
  const Field x = gaussian_field(11, NoiseDomain::inputs, 0, shape);
  const EpsOutput a = model.eps(x, 321, nullptr);
  const EpsOutput b = model.eps(x, 321, nullptr);
  CHECK(bitwise_equal(a.eps, b.eps));
  CHECK(a.eps.shape() == shape);
  CHECK(!a.attention.has_value());
}

TEST_CASE("counting model counts every call") {
  const Shape shape{1, 2, 2};
  const GmmDenoiser model(single_gaussian_spec(shape, 0.0, 1.0), schedule());
  CountingModel counter(model);
  for (int i = 0; i < 7; ++i) counter.eps(Field(shape), 10 + i, nullptr);
  CHECK(counter.evaluations() == 7);
  CHECK(counter.fingerprint() == model.fingerprint());
  counter.reset();
  CHECK(counter.evaluations() == 0);
}

TEST_CASE("model fingerprints follow the mixture and schedule") {
  const Shape shape{1, 2, 2};
  const GmmDenoiser a(single_gaussian_spec(shape, 0.0, 1.0), schedule());
  const GmmDenoiser b(single_gaussian_spec(shape, 0.0, 1.1), schedule());
  const GmmDenoiser c(single_gaussian_spec(shape, 0.0, 1.0),
                      NoiseSchedule::build(ScheduleKind::linear, 999, 1e-4, 0.02));
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("attention stash normalisation error") {
  AttentionStash s(1, 2, 3, 2, 2);
  for (int h = 0; h < 2; ++h) {
    for (int k = 0; k < 3; ++k) {
      for (auto& v : s.map(0, h, k)) v = 1.0f / 3.0f;
    }
  }
  CHECK(s.max_normalisation_error() < 1e-6);
  s.map(0, 1, 2)[3] = 0.9f;
  CHECK(s.max_normalisation_error() > 0.5);
}
