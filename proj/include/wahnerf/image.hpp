#pragma once

#include <string>
#include <vector>

#include "wahnerf/geometry.hpp"

namespace wah {

/// RGB image, row-major, channels interleaved, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int w, int h, double fill = 0.0);

  double& at(int row, int col, int ch) { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
  double at(int row, int col, int ch) const { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

/// 8-bit RGB PNG; values are clamped to [0, 1] and scaled linearly to 0..255.
void write_png(const std::string& path, const Image& img);

/// Reads an 8-bit or 16-bit gray/RGB(A) PNG, scaled linearly to [0, 1].
/// An alpha channel is composited onto `background`.
Image read_png(const std::string& path, const Vec3& background = Vec3::Ones());

}  // namespace wah
