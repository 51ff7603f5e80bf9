#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ledits/field.hpp"

namespace ledits {

/// `LPF1` raw field file: magic, u32 C, H, W (little-endian), then C*H*W float32 values.
std::vector<std::uint8_t> encode_field(const Field& field);
Field decode_field(const std::vector<std::uint8_t>& bytes, const std::string& what = "field file");
void write_field_file(const std::filesystem::path& path, const Field& field);
Field read_field_file(const std::filesystem::path& path);

/// 8-bit preview with per-file min-max normalisation; a constant field maps to mid-gray (128).
/// One channel encodes as PGM (P5), three channels as PPM (P6).
std::vector<std::uint8_t> encode_preview(const Field& field);

/// Writes the preview plus a `<path>.txt` sidecar recording the normalisation range.
void write_preview(const std::filesystem::path& path, const Field& field);

/// Binary (1, H, W) mask as P5 with 0 -> 0 and 1 -> 255.
std::vector<std::uint8_t> encode_mask_pgm(const Field& mask);
void write_mask_pgm(const std::filesystem::path& path, const Field& mask);

/// Reads a P5 mask with values {0, 255} into a (1, H, W) field of {0, 1}. Other grey levels
/// raise ParameterError; malformed headers raise FormatError.
Field read_mask_pgm(const std::filesystem::path& path);
Field decode_mask_pgm(const std::vector<std::uint8_t>& bytes, const std::string& what = "mask");

}  // namespace ledits
