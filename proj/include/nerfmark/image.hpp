// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace nerfmark {

// Planar float RGB image with values in [0,1]. Pixels are stored
// interleaved (r,g,b) in row-major scan order.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // size = width*height*3

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.f) {}

  float* pixel(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  void clamp() {
    for (float& v : data) v = std::clamp(v, 0.f, 1.f);
  }

  // Channels x (H*W) matrix view used by the differentiable image pipeline.
  Eigen::MatrixXf to_planar() const {
    Eigen::MatrixXf m(3, pixel_count());
    for (size_t p = 0; p < pixel_count(); ++p)
      for (int c = 0; c < 3; ++c) m(c, p) = data[p * 3 + c];
    return m;
  }

  static ImageRGB from_planar(const Eigen::MatrixXf& m, int width, int height) {
    ImageRGB img(width, height);
    for (size_t p = 0; p < img.pixel_count(); ++p)
      for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = m(c, p);
    return img;
  }
};

// Lossless 8-bit RGB file I/O (PNG). Throws std::runtime_error on failure.
ImageRGB read_png(const std::string& path);
void write_png(const std::string& path, const ImageRGB& img);

}  // namespace nerfmark
