#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cava/types.hpp"

namespace cava {

/// Load a grayscale raster from a PGM (P5, maxval 255 or 65535) or a
/// grayscale PNG (8- or 16-bit, color type 0, non-interlaced) file.
/// Intensities are scaled to [0,1] by the container's maximum value.
/// Throws std::runtime_error naming the offending property otherwise.
Image load_image(const std::filesystem::path& path);

Image decode_pgm(const std::vector<unsigned char>& bytes, const std::string& name);
Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name);

/// 8-bit binary PGM; intensities are clamped to [0,1] and quantized.
void write_pgm(const std::filesystem::path& path, const Image& img);

/// 8-bit grayscale PNG, same quantization as write_pgm.
void write_png(const std::filesystem::path& path, const Image& img);

/// Raw row-major little-endian f64 dump (one double per pixel, no header).
void write_raw_f64(const std::filesystem::path& path, const Image& img);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path,
                       const void* data, std::size_t size);

}  // namespace cava
