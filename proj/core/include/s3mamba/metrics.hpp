#pragma once

#include <cstddef>
#include <string>

#include "s3mamba/image.hpp"

namespace s3 {

enum class PsnrMode { rgb, y };

inline constexpr double kPsnrCap = 99.0;

/// BT.601 luma on [0, 1] inputs: (65.481 R + 128.553 G + 24.966 B + 16) / 255.
Image to_luma(const Image& rgb);

/// 10 log10(1 / MSE) after removing `shave` pixels from every border.
/// Identical inputs give kPsnrCap.
double psnr(const Image& pred, const Image& gt, PsnrMode mode, std::size_t shave);

/// Single-scale SSIM on the luma channel: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 1, averaged over valid window positions only.
double ssim(const Image& pred, const Image& gt, std::size_t shave);

struct MetricReport {
  double psnr_rgb = 0.0;
  double psnr_y = 0.0;
  double ssim = 0.0;
  std::size_t shave = 0;
};

MetricReport evaluate_pair(const Image& pred, const Image& gt, std::size_t shave);

/// ceil(s): the border removed before scoring at scale s.
std::size_t default_shave(double scale);

}  // namespace s3
