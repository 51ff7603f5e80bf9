#include "ledits/fingerprint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <vector>

#include "ledits/error.hpp"

namespace ledits {

static_assert(std::endian::native == std::endian::little,
              "canonical encodings assume a little-endian host");

struct Fingerprinter::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Fingerprinter::Fingerprinter() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw InternalError("sha256 initialisation failed");
  }
}

Fingerprinter::~Fingerprinter() {
  if (impl_ && impl_->ctx != nullptr) EVP_MD_CTX_free(impl_->ctx);
}

Fingerprinter& Fingerprinter::bytes(std::span<const std::uint8_t> data) {
  if (!data.empty() && EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1) {
    throw InternalError("sha256 update failed");
  }
  return *this;
}

Fingerprinter& Fingerprinter::text(std::string_view s) {
  u64(s.size());
  return bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

Fingerprinter& Fingerprinter::u32(std::uint32_t v) {
  std::uint8_t buf[4];
  std::memcpy(buf, &v, 4);
  return bytes(buf);
}

Fingerprinter& Fingerprinter::u64(std::uint64_t v) {
  std::uint8_t buf[8];
  std::memcpy(buf, &v, 8);
  return bytes(buf);
}

Fingerprinter& Fingerprinter::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Fingerprinter& Fingerprinter::floats(std::span<const float> values) {
  u64(values.size());
  return bytes({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
}

Digest Fingerprinter::finish() {
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, out.data(), &len) != 1 || len != out.size()) {
    throw InternalError("sha256 finalisation failed");
  }
  return out;
}

Digest sha256(std::span<const std::uint8_t> data) {
  Fingerprinter fp;
  fp.bytes(data);
  return fp.finish();
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

}  // namespace ledits
