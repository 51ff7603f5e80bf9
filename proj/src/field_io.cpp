#include "ledits/field_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"

namespace ledits {

std::vector<std::uint8_t> encode_field(const Field& field) {
  io::ByteWriter w;
  w.magic("LPF1");
  w.field(field);
  return w.bytes();
}

Field decode_field(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  io::ByteReader r(bytes.data(), bytes.size(), what);
  r.expect_magic("LPF1");
  Field f = r.field();
  r.expect_end();
  return f;
}

void write_field_file(const std::filesystem::path& path, const Field& field) {
  io::write_file_atomic(path, encode_field(field));
}

Field read_field_file(const std::filesystem::path& path) {
  return decode_field(io::read_file(path), "field file " + path.string());
}

namespace {

std::vector<std::uint8_t> with_header(const char* magic, int width, int height) {
  const std::string header =
      std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  return {header.begin(), header.end()};
}

std::uint8_t quantise(float v, float lo, float hi) {
  if (hi == lo) return 128;
  const double u = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo);
  return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::uint8_t> encode_preview(const Field& field) {
  const Shape s = field.shape();
  const auto [lo_it, hi_it] = std::minmax_element(field.data().begin(), field.data().end());
  const float lo = *lo_it;
  const float hi = *hi_it;
  const std::size_t n = s.spatial();
  if (s.channels == 3) {
    auto out = with_header("P6", s.width, s.height);
    for (std::size_t p = 0; p < n; ++p) {
      for (int c = 0; c < 3; ++c) out.push_back(quantise(field[c * n + p], lo, hi));
    }
    return out;
  }
  auto out = with_header("P5", s.width, s.height);
  for (std::size_t p = 0; p < n; ++p) out.push_back(quantise(field[p], lo, hi));
  return out;
}

void write_preview(const std::filesystem::path& path, const Field& field) {
  io::write_file_atomic(path, encode_preview(field));
  const auto [lo, hi] = std::minmax_element(field.data().begin(), field.data().end());
  std::ostringstream note;
  note.precision(9);
  note << "normalisation: per-file min-max\n"
       << "min " << *lo << "\nmax " << *hi << "\n"
       << "channels " << field.shape().channels
       << (field.shape().channels == 1 || field.shape().channels == 3 ? "\n"
                                                                       : " (channel 0 shown)\n");
  std::filesystem::path sidecar = path;
  sidecar += ".txt";
  io::write_text_atomic(sidecar, note.str());
}

std::vector<std::uint8_t> encode_mask_pgm(const Field& mask) {
  const Shape s = mask.shape();
  if (s.channels != 1) throw ParameterError("mask dump needs a single-channel field");
  auto out = with_header("P5", s.width, s.height);
  for (float v : mask.data()) out.push_back(v != 0.0f ? 255 : 0);
  return out;
}

void write_mask_pgm(const std::filesystem::path& path, const Field& mask) {
  io::write_file_atomic(path, encode_mask_pgm(mask));
}

Field decode_mask_pgm(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw FormatError(what + ": truncated PGM header");
    return tok;
  };
  auto number = [&]() {
    const std::string tok = next_token();
    if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); }) ||
        tok.size() > 6) {
      throw FormatError(what + ": bad PGM header field '" + tok + "'");
    }
    return std::stoi(tok);
  };
  if (next_token() != "P5") throw FormatError(what + ": not a binary PGM (P5)");
  const int width = number();
  const int height = number();
  const int maxval = number();
  if (width <= 0 || height <= 0) throw FormatError(what + ": zero PGM dimension");
  if (maxval != 255) throw FormatError(what + ": PGM mask must use maxval 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(what + ": bad PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos != n) throw FormatError(what + ": PGM pixel data size mismatch");
  Field mask(Shape{1, height, width});
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t v = bytes[pos + i];
    if (v != 0 && v != 255) throw ParameterError(what + ": user mask is not binary (0/255)");
    mask[i] = v == 255 ? 1.0f : 0.0f;
  }
  return mask;
}

Field read_mask_pgm(const std::filesystem::path& path) {
  return decode_mask_pgm(io::read_file(path), "mask " + path.string());
}

}  // namespace ledits
