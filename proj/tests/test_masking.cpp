#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ledits/error.hpp"
#include "ledits/masking.hpp"
#include "ledits/random.hpp"

using namespace ledits;

namespace {

Field row_field(const std::vector<float>& v) {
  return Field(Shape{1, 1, static_cast<int>(v.size())}, v);
}

}  // namespace

TEST_CASE("nearest-rank quantile on 1..100") {
  std::vector<float> v(100);
  for (int i = 0; i < 100; ++i) v[i] = static_cast<float>(100 - i);
  CHECK(percentile_threshold(v, 0.9) == 90.0);
  const Field m = mask_from_attention(row_field(v), 0.9);
  CHECK(count_selected(m) == 11);
  CHECK(is_binary(m));
}

TEST_CASE("quantile on four values and ties") {
  const std::vector<float> v{1, 2, 3, 4};
  CHECK(percentile_threshold(v, 0.5) == 2.0);
  CHECK(count_selected(mask_from_attention(row_field(v), 0.5)) == 3);
  const std::vector<float> flat{5, 5, 5, 5};
  CHECK(count_selected(mask_from_attention(row_field(flat), 0.75)) == 4);
  CHECK(percentile_threshold(v, 1e-9) == 1.0);
  CHECK_THROWS_AS(percentile_threshold(std::vector<float>{}, 0.5), ParameterError);
}

TEST_CASE("count law: at least (1 - lambda) N entries, exactly when values are distinct") {
  CounterRng rng(4, NoiseDomain::inputs, 0);
  std::vector<float> v(257);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  for (double lambda : {0.1, 0.33, 0.5, 0.8, 0.95}) {
    const std::size_t k = static_cast<std::size_t>(std::ceil(lambda * v.size()));
    const std::size_t n = count_selected(mask_from_attention(row_field(v), lambda));
    CHECK(n == v.size() - k + 1);
    CHECK(static_cast<double>(n) >= (1.0 - lambda) * v.size());
  }
}

TEST_CASE("mask uses magnitudes") {
  const std::vector<float> v{-9, 1, 2, 3};
  const Field m = mask_from_attention(row_field(v), 0.75);
  CHECK(m[0] == 1.0f);
  CHECK(m[3] == 1.0f);
  CHECK(count_selected(m) == 2);
}

TEST_CASE("aggregation averages heads and sums tokens") {
  AttentionStash s(1, 2, 3, 2, 2);
  const float h0[3][4] = {{0.5f, 0.5f, 0.5f, 0.5f}, {0.5f, 0.1f, 0.2f, 0.3f}, {0, 0.4f, 0.3f, 0.2f}};
  const float h1[3][4] = {{0.2f, 0.2f, 0.2f, 0.2f}, {0.3f, 0.3f, 0.3f, 0.3f}, {0.5f, 0.5f, 0.5f, 0.5f}};
  for (int tok = 0; tok < 3; ++tok) {
    std::copy(h0[tok], h0[tok] + 4, s.map(0, 0, tok).begin());
    std::copy(h1[tok], h1[tok] + 4, s.map(0, 1, tok).begin());
  }
  CHECK(s.max_normalisation_error() < 1e-6);
  const int one[] = {1};
  const Field a = aggregate_attention(s, one);
  CHECK(a.shape() == Shape{1, 2, 2});
  CHECK(a[0] == doctest::Approx(0.4));
  CHECK(a[1] == doctest::Approx(0.2));
  const int both[] = {1, 2};
  const Field b = aggregate_attention(s, both);
  CHECK(b[0] == doctest::Approx(0.65));
  CHECK(b[3] == doctest::Approx(0.65));
}

TEST_CASE("nearest upsampling replicates blocks") {
  const Field coarse(Shape{1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const Field up = upsample_nearest(coarse, 4, 6);
  CHECK(up.shape() == Shape{1, 4, 6});
  CHECK(up.at(0, 0, 0) == 1.0f);
  CHECK(up.at(0, 1, 2) == 1.0f);
  CHECK(up.at(0, 1, 3) == 2.0f);
  CHECK(up.at(0, 3, 5) == 4.0f);
  CHECK(up.at(0, 2, 0) == 3.0f);
}

TEST_CASE("noise mask aggregates channels") {
  Field psi(Shape{2, 1, 3});
  psi.at(0, 0, 0) = 1.0f;
  psi.at(1, 0, 0) = -1.0f;
  psi.at(0, 0, 2) = 0.5f;
  const Field mag = spatial_magnitude(psi);
  CHECK(mag.shape() == Shape{1, 1, 3});
  CHECK(mag[0] == doctest::Approx(1.0));
  CHECK(mag[2] == doctest::Approx(0.25));
  CHECK(count_selected(mask_from_noise(psi, 0.6)) == 2);
  CHECK(count_selected(mask_from_noise(psi, 0.9)) == 1);
}

TEST_CASE("compute_masks: stash fallback and user override") {
  Field psi(Shape{1, 2, 2}, std::vector<float>{0.1f, 0.9f, 0.3f, 0.2f});
  const int tok[] = {1};
  const MaskPair no_stash = compute_masks(std::nullopt, tok, psi, 0.5, 4.0);
  CHECK(no_stash.m1_selected == 4);
  CHECK(no_stash.m2_selected == 3);
  CHECK(no_stash.phi[1] == 4.0f);
  CHECK(no_stash.phi[0] == 0.0f);
  CHECK_FALSE(no_stash.user_override);

  const Field user(Shape{1, 2, 2}, std::vector<float>{1, 0, 0, 0});
  const MaskPair over = compute_masks(std::nullopt, tok, psi, 0.5, 4.0, &user);
  CHECK(over.user_override);
  CHECK(over.phi[0] == 4.0f);
  CHECK(over.phi[1] == 0.0f);
  CHECK(over.phi_selected == 1);
}

TEST_CASE("iou cases") {
  const Field a(Shape{1, 1, 4}, std::vector<float>{1, 1, 0, 0});
  const Field b(Shape{1, 1, 4}, std::vector<float>{0, 1, 1, 0});
  const Field empty(Shape{1, 1, 4});
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(empty, empty) == 0.0);
  CHECK(iou(a, empty) == 0.0);
}

TEST_CASE("random masks of density a meet the a^2 / (2a - a^2) floor") {
  const Shape s{1, 64, 64};
  const double a = 0.25;
  CounterRng rng(12, NoiseDomain::inputs, 3);
  double total = 0.0;
  const int trials = 40;
  for (int k = 0; k < trials; ++k) {
    Field m1(s), m2(s);
    for (std::size_t i = 0; i < m1.size(); ++i) {
      m1[i] = rng.uniform() < a ? 1.0f : 0.0f;
      m2[i] = rng.uniform() < a ? 1.0f : 0.0f;
    }
    total += iou(m1, m2);
  }
  CHECK(total / trials == doctest::Approx(a * a / (2 * a - a * a)).epsilon(0.03));
}
