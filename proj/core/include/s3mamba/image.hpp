#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "s3mamba/tensor.hpp"

namespace s3 {

/// Planar (CHW) image with values nominally in [0, 1].
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  bool empty() const { return data.empty(); }

  Tensor to_tensor() const;  // [C, H, W]
  static Image from_tensor(const Tensor& t);

  Image crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const;
};

void clamp01(Image& img);

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PNG (8-bit RGB or RGBA, non-interlaced; alpha is dropped) or binary PPM
/// (P6, maxval 255), chosen by file contents. Values map as v / 255.
Image load_image(const std::filesystem::path& path);

/// Writes PNG or PPM depending on the extension (.png, .ppm). Values are
/// clamped to [0, 1] and quantized as round(255 v).
void save_image(const std::filesystem::path& path, const Image& img);

std::vector<unsigned char> quantize8(const Image& img);

}  // namespace s3
