#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace ledits {

using Digest = std::array<std::uint8_t, 32>;

std::string to_hex(const Digest& digest);

/// Incremental SHA-256 over a canonical little-endian byte encoding.
class Fingerprinter {
 public:
  Fingerprinter();
  ~Fingerprinter();
  Fingerprinter(const Fingerprinter&) = delete;
  Fingerprinter& operator=(const Fingerprinter&) = delete;

  Fingerprinter& bytes(std::span<const std::uint8_t> data);
  Fingerprinter& text(std::string_view s);
  Fingerprinter& u32(std::uint32_t v);
  Fingerprinter& u64(std::uint64_t v);
  Fingerprinter& f64(double v);
  Fingerprinter& floats(std::span<const float> values);

  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Digest sha256(std::span<const std::uint8_t> data);

}  // namespace ledits
