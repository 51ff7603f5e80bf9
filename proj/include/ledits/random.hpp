#pragma once

#include <array>
#include <cstdint>

#include "ledits/field.hpp"

namespace ledits {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Independent stream tags. Every stream is addressed by (seed, domain, stream id), so draws
/// for one purpose never alias or shift draws for another.
enum class NoiseDomain : std::uint32_t {
  reconstruction = 1,  // auxiliary sequence noise, stream id = timestep
  sampling = 2,        // fresh z for unguided sampling, stream id = step index
  inputs = 3,          // synthetic test inputs
  dataset = 4,         // synthetic shape generator
  training = 5,        // training minibatches
  init = 6,            // weight initialisation
};

/// Sequential view of one counter-based stream.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, NoiseDomain domain, std::uint32_t stream);

  std::uint32_t next_u32();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_low();
  double normal();
  /// Uniform integer in [0, bound).
  std::uint32_t below(std::uint32_t bound);

  Field normal_field(Shape shape);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint32_t domain_;
  std::uint32_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Standard-normal field for (seed, domain, stream). Pure function of its arguments.
Field gaussian_field(std::uint64_t seed, NoiseDomain domain, std::uint32_t stream, Shape shape);

}  // namespace ledits
