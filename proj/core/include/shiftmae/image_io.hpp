#pragma once

#include "shiftmae/raster.hpp"

#include <filesystem>
#include <iosfwd>

namespace shiftmae {

// Binary PGM (P5) with maxval 255. Float images are clamped to [0,1] and
// quantised with round(v * 255) on write; read returns v / 255.
void write_pgm(const std::filesystem::path& path, const Image& image);
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);  // nonzero -> 255
Raster<std::uint8_t> read_pgm_bytes(const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);
BinaryMask read_pgm_mask(const std::filesystem::path& path);  // >= 128 -> 1

Raster<std::uint8_t> read_pgm_bytes(std::istream& in);

/// Grayscale PFM ("Pf"), little-endian float32 (scale -1.0), rows stored
/// bottom-to-top as the format requires.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);
Image read_pfm(std::istream& in);

std::uint8_t quantize_u8(float v);

}  // namespace shiftmae
