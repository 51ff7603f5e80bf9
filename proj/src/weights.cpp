#include "ledits/weights.hpp"

#include <algorithm>
#include <limits>

#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"

namespace ledits {

std::size_t NamedTensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

Weights::Weights(std::vector<NamedTensor> tensors) {
  for (auto& t : tensors) add(std::move(t));
}

void Weights::add(NamedTensor tensor) {
  if (contains(tensor.name)) throw ParameterError("duplicate tensor name '" + tensor.name + "'");
  if (tensor.element_count() != tensor.data.size()) {
    throw ParameterError("tensor '" + tensor.name + "' data does not match its dimensions");
  }
  tensors_.push_back(std::move(tensor));
}

bool Weights::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

const NamedTensor& Weights::get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ParameterError("missing tensor '" + name + "'");
}

NamedTensor& Weights::get(const std::string& name) {
  return const_cast<NamedTensor&>(std::as_const(*this).get(name));
}

Digest Weights::fingerprint() const { return sha256(encode_weights(*this)); }

std::vector<std::uint8_t> encode_weights(const Weights& weights) {
  io::ByteWriter w;
  w.magic("LPW1");
  w.u32(static_cast<std::uint32_t>(weights.tensors().size()));
  for (const auto& t : weights.tensors()) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) w.u32(d);
    w.floats(t.data.data(), t.data.size());
  }
  return w.bytes();
}

Weights decode_weights(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  io::ByteReader r(bytes.data(), bytes.size(), what);
  r.expect_magic("LPW1");
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = r.u32();
    if (name_len > r.remaining()) throw FormatError(what + ": truncated tensor name");
    t.name.resize(name_len);
    r.raw(t.name.data(), name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(what + ": tensor '" + t.name + "' has rank " +
                                    std::to_string(rank));
    t.dims.resize(rank);
    std::uint64_t elements = 1;
    for (auto& d : t.dims) {
      d = r.u32();
      if (d != 0 && elements > std::numeric_limits<std::uint64_t>::max() / d) {
        throw FormatError(what + ": dimension overflow in '" + t.name + "'");
      }
      elements *= d;
    }
    if (elements > r.remaining() / sizeof(float)) {
      throw FormatError(what + ": tensor '" + t.name + "' exceeds the remaining file");
    }
    t.data.resize(elements);
    r.raw(t.data.data(), elements * sizeof(float));
    tensors.push_back(std::move(t));
  }
  r.expect_end();
  try {
    return Weights(std::move(tensors));
  } catch (const ParameterError& e) {
    throw FormatError(what + ": " + e.what());
  }
}

void save_weights(const Weights& weights, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_weights(weights));
}

Weights load_weights(const std::filesystem::path& path) {
  return decode_weights(io::read_file(path), "weight file " + path.string());
}

}  // namespace ledits
