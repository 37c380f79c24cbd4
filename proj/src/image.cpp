#include "wahnerf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image::Image(int w, int h, double fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw InvalidArgument("image dimensions must be non-negative");
  rgb.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill);
}

void write_png(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0 || img.rgb.size() != img.pixels() * 3) {
    throw InvalidArgument("write_png: image buffer does not match its dimensions");
  }
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> bytes(img.rgb.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<png_byte>(std::lround(std::clamp(img.rgb[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) rows[r] = bytes.data() + static_cast<std::size_t>(r) * img.width * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path, const Vec3& background) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_uint_16> samples;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalise everything to 16-bit gray-or-RGB with alpha.
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (depth < 16) png_set_expand_16(png);
  png_set_add_alpha(png, 0xFFFF, PNG_FILLER_AFTER);
  png_set_swap(png);  // host-order 16-bit samples on little-endian hosts
  png_read_update_info(png, info);

  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if (stride != static_cast<std::size_t>(width) * 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG layout in '" + path + "'");
  }
  samples.resize(static_cast<std::size_t>(width) * height * 4);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) {
    rows[r] = reinterpret_cast<png_bytep>(samples.data() + static_cast<std::size_t>(r) * width * 4);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const double alpha = samples[p * 4 + 3] / 65535.0;
    for (int c = 0; c < 3; ++c) {
      const double v = samples[p * 4 + c] / 65535.0;
      img.rgb[p * 3 + c] = alpha * v + (1.0 - alpha) * background[c];
    }
  }
  return img;
}

}  // namespace wah
