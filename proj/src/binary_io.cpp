#include "ledits/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "ledits/error.hpp"

namespace ledits::io {

void ByteWriter::field(const Field& f) {
  u32(static_cast<std::uint32_t>(f.shape().channels));
  u32(static_cast<std::uint32_t>(f.shape().height));
  u32(static_cast<std::uint32_t>(f.shape().width));
  floats(f.data().data(), f.size());
}

void ByteReader::raw(void* out, std::size_t n) {
  if (n > remaining()) {
    throw FormatError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
  }
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}

void ByteReader::expect_magic(std::string_view m) {
  std::string got(m.size(), '\0');
  raw(got.data(), got.size());
  if (got != m) throw FormatError(what_ + ": bad magic, expected " + std::string(m));
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  raw(&v, 4);
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  raw(&v, 8);
  return v;
}

double ByteReader::f64() {
  double v;
  raw(&v, 8);
  return v;
}

Field ByteReader::field() {
  const std::uint32_t c = u32();
  const std::uint32_t h = u32();
  const std::uint32_t w = u32();
  if (c == 0 || h == 0 || w == 0) throw FormatError(what_ + ": zero field dimension");
  constexpr std::uint64_t kMax = 1ull << 31;
  if (c >= kMax || h >= kMax || w >= kMax) throw FormatError(what_ + ": dimension overflow");
  const std::uint64_t count = static_cast<std::uint64_t>(c) * h * w;
  if (count > remaining() / sizeof(float)) {
    throw FormatError(what_ + ": field of " + std::to_string(count) +
                      " values exceeds the remaining file");
  }
  std::vector<float> data(count);
  raw(data.data(), count * sizeof(float));
  return Field(Shape{static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)},
               std::move(data));
}

void ByteReader::expect_end() {
  if (remaining() != 0) {
    throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace ledits::io
