#include <cmath>
#include <set>

#include "doctest.h"
#include "ledits/random.hpp"

using namespace ledits;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of (seed, domain, stream)") {
  const Shape s{2, 4, 4};
  CHECK(bitwise_equal(gaussian_field(7, NoiseDomain::reconstruction, 3, s),
                      gaussian_field(7, NoiseDomain::reconstruction, 3, s)));
  CHECK(!bitwise_equal(gaussian_field(7, NoiseDomain::reconstruction, 3, s),
                       gaussian_field(7, NoiseDomain::reconstruction, 4, s)));
  CHECK(!bitwise_equal(gaussian_field(7, NoiseDomain::reconstruction, 3, s),
                       gaussian_field(7, NoiseDomain::sampling, 3, s)));
  CHECK(!bitwise_equal(gaussian_field(7, NoiseDomain::reconstruction, 3, s),
                       gaussian_field(8, NoiseDomain::reconstruction, 3, s)));
}

TEST_CASE("seeds differing only in the high word give different streams") {
  CounterRng a(1, NoiseDomain::inputs, 0);
  CounterRng b(1 + (1ull << 32), NoiseDomain::inputs, 0);
  CHECK(a.next_u32() != b.next_u32());
}

TEST_CASE("normal draws have unit moments") {
  CounterRng rng(42, NoiseDomain::inputs, 0);
  const int n = 200000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sum_sq += v * v;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sum_sq / n - 1.0) < 0.01);
}

TEST_CASE("uniform and below stay in range") {
  CounterRng rng(5, NoiseDomain::dataset, 9);
  std::set<std::uint32_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform_open_low();
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    const auto k = rng.below(7);
    CHECK(k < 7u);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
}
