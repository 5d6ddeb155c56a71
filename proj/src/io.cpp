#include "twrmcae/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "twrmcae/error.hpp"

namespace twrmcae::io {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  if (!in) throw IoError("truncated TWRT stream");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_twrt(const Tensor& t, std::ostream& out) {
  if (t.rank() > 255) throw ShapeError("TWRT supports rank <= 255");
  out.write("TWRT", 4);
  const std::array<char, 4> hdr{static_cast<char>(kTwrtVersion), static_cast<char>(t.kind()),
                                static_cast<char>(t.rank()), 0};
  out.write(hdr.data(), 4);
  for (std::size_t d : t.shape()) {
    if (d > 0xFFFFFFFFULL) throw ShapeError("TWRT extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.raw()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Tensor read_twrt(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::string_view(magic.data(), 4) != "TWRT") throw IoError("bad TWRT magic");
  const auto version = static_cast<std::uint8_t>(get_le(in, 1));
  if (version != kTwrtVersion) throw IoError("unsupported TWRT version " + std::to_string(version));
  const auto kind = static_cast<std::uint8_t>(get_le(in, 1));
  if (kind > 1) throw IoError("bad TWRT kind byte");
  const auto rank = static_cast<std::size_t>(get_le(in, 1));
  get_le(in, 1);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_le(in, 4));
  const auto tk = static_cast<TensorKind>(kind);
  std::vector<double> raw(shape_numel(shape) * (tk == TensorKind::complex ? 2 : 1));
  for (double& v : raw) v = std::bit_cast<double>(get_le(in, 8));
  return Tensor(std::move(shape), std::move(raw), tk);
}

void write_twrt(const Tensor& t, const std::filesystem::path& path) {
  std::ostringstream buf(std::ios::binary);
  write_twrt(t, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_twrt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    return read_twrt(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::uint8_t quantize_pixel(double p) {
  const double c = std::clamp(p, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

void write_png(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.is_complex()) {
    throw ShapeError("png export needs a real 3 x H x W image");
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed: " + path.string());
  }
  std::vector<png_byte> row(3 * w);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) row[3 * x + c] = quantize_pixel(image.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, std::size_t& height,
                                       std::size_t& width) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open for reading: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed: " + path.string());
  }
  std::vector<std::uint8_t> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("not an 8-bit RGB PNG: " + path.string());
  }
  pixels.resize(height * width * 3);
  for (std::size_t y = 0; y < height; ++y) png_read_row(png, pixels.data() + y * width * 3, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace twrmcae::io
