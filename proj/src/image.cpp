// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace nerfmark {

ImageRGB read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error("png: cannot read " + path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("png: decode failed for " + path + ": " + msg);
  }
  ImageRGB img(static_cast<int>(png.width), static_cast<int>(png.height));
  for (size_t i = 0; i < buffer.size(); ++i) img.data[i] = buffer[i] / 255.f;
  return img;
}

void write_png(const std::string& path, const ImageRGB& img) {
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("png: empty image");
  std::vector<uint8_t> buffer(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::min(1.f, std::max(0.f, img.data[i]));
    buffer[i] = static_cast<uint8_t>(std::lround(v * 255.f));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw std::runtime_error("png: cannot write " + path + ": " + png.message);
}

}  // namespace nerfmark
