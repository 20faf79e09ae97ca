#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cecil/common.hpp"

namespace cecil {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(std::size_t(h) * w * 3, 0) {}

  std::uint64_t pixel_count() const {
    return std::uint64_t(height) * std::uint64_t(width);
  }
  std::uint64_t byte_size() const { return pixel_count() * 3; }

  std::uint8_t& at(int y, int x, int c) {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const Image& o) const {
    return height == o.height && width == o.width && rgb == o.rgb;
  }
};

/// Mean squared error over all RGB channels.
inline double image_mse(const Image& a, const Image& b) {
  require(a.same_shape(b), "image_mse: shape mismatch");
  require(!a.rgb.empty(), "image_mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    double d = double(a.rgb[i]) - double(b.rgb[i]);
    acc += d * d;
  }
  return acc / double(a.rgb.size());
}

// PSNR against 8-bit peak 255, RGB MSE over all channels. Identical images
// have zero MSE; the +infinity sentinel is reported for that case.
inline double image_psnr(const Image& a, const Image& b) {
  double mse = image_mse(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace cecil
