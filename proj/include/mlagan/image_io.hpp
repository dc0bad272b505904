#pragma once

// 8-bit RGB PNG <-> [3 x H x W] tensors in [0, 1].

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mlagan/error.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan {

/// Maps a value in [0,1] to 8 bits with round-half-up; values outside are clamped.
inline unsigned char to_byte(double v) {
  const double s = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<unsigned char>(s);
}

/// Loads an 8-bit PNG as RGB. Grayscale and palette images are expanded; 16-bit
/// and alpha images are rejected rather than silently converted.
template <typename T = float>
Tensor<T> load_image(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  if (image.format & (PNG_FORMAT_FLAG_LINEAR | PNG_FORMAT_FLAG_ALPHA)) {
    png_image_free(&image);
    throw IoError("unsupported PNG (16-bit or alpha) " + path.string());
  }
  image.format = PNG_FORMAT_RGB;
  const std::size_t w = image.width, h = image.height;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    throw IoError("corrupt PNG " + path.string() + ": " + image.message);
  }
  Tensor<T> out({3, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<T>(pixels[3 * i + c] / 255.0);
  return out;
}

/// Writes [3 x H x W] as an 8-bit RGB PNG.
template <typename T>
void save_image(const Tensor<T>& img, const std::filesystem::path& path) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw DimensionError("save_image: expected [3 x H x W], got " + shape_str(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  std::vector<unsigned char> pixels(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) pixels[3 * i + c] = to_byte(static_cast<double>(img[c * plane + i]));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("PNG write failed for " + path.string() + ": " + image.message);
  }
}

}  // namespace mlagan
