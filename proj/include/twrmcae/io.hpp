#pragma once

#include <filesystem>
#include <iosfwd>

#include "twrmcae/tensor.hpp"

namespace twrmcae::io {

// TWRT layout: "TWRT", u8 version (1), u8 kind (0 real / 1 complex), u8 rank,
// u8 reserved (0), rank x u32 LE extents, then LE IEEE-754 doubles
// (complex: re, im per element).
inline constexpr std::uint8_t kTwrtVersion = 1;

void write_twrt(const Tensor& t, std::ostream& out);
Tensor read_twrt(std::istream& in);

void write_twrt(const Tensor& t, const std::filesystem::path& path);
Tensor read_twrt(const std::filesystem::path& path);

/// Writes a 3 x H x W image with pixels in [0, 1] as 8-bit RGB PNG,
/// byte = floor(255 * p + 0.5).
void write_png(const Tensor& image, const std::filesystem::path& path);

/// Reads an 8-bit RGB PNG back into raw bytes (H x W x 3, row-major).
std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, std::size_t& height,
                                       std::size_t& width);

std::uint8_t quantize_pixel(double p);

}  // namespace twrmcae::io
