#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ledits/fingerprint.hpp"

namespace ledits {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

/// Ordered collection of named float tensors; order is preserved through save/load.
class Weights {
 public:
  Weights() = default;
  explicit Weights(std::vector<NamedTensor> tensors);

  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::vector<NamedTensor>& tensors() { return tensors_; }

  void add(NamedTensor tensor);
  bool contains(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;
  NamedTensor& get(const std::string& name);

  /// SHA-256 of the canonical LPW1 encoding.
  Digest fingerprint() const;

 private:
  std::vector<NamedTensor> tensors_;
};

/// `LPW1`: magic, u32 tensor count, then per tensor u32 name length, name bytes, u32 rank,
/// u32 dims[rank], raw float32 values. All integers little-endian.
std::vector<std::uint8_t> encode_weights(const Weights& weights);
Weights decode_weights(const std::vector<std::uint8_t>& bytes,
                       const std::string& what = "weight file");
void save_weights(const Weights& weights, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

}  // namespace ledits
