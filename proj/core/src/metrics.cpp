#include "s3mamba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace s3 {

namespace {

void check_pair(const Image& pred, const Image& gt, std::size_t shave, const char* what) {
  if (pred.channels != gt.channels || pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width) + " vs " + std::to_string(gt.height) + "x" +
                                std::to_string(gt.width) + ")");
  }
  if (pred.height <= 2 * shave || pred.width <= 2 * shave) {
    throw std::invalid_argument(std::string(what) + ": image smaller than twice the shave");
  }
}

}  // namespace

Image to_luma(const Image& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("to_luma: expected 3 channels");
  Image y(1, rgb.height, rgb.width);
  for (std::size_t i = 0; i < rgb.height; ++i)
    for (std::size_t j = 0; j < rgb.width; ++j) {
      y.at(0, i, j) = (65.481 * rgb.at(0, i, j) + 128.553 * rgb.at(1, i, j) + 24.966 * rgb.at(2, i, j) + 16.0) /
                      255.0;
    }
  return y;
}

double psnr(const Image& pred, const Image& gt, PsnrMode mode, std::size_t shave) {
  check_pair(pred, gt, shave, "psnr");
  const Image a = mode == PsnrMode::y ? to_luma(pred) : pred;
  const Image b = mode == PsnrMode::y ? to_luma(gt) : gt;
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < a.channels; ++c)
    for (std::size_t i = shave; i < a.height - shave; ++i)
      for (std::size_t j = shave; j < a.width - shave; ++j) {
        const double d = a.at(c, i, j) - b.at(c, i, j);
        sse += d * d;
        ++n;
      }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& pred, const Image& gt, std::size_t shave) {
  check_pair(pred, gt, shave, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const std::size_t H = pred.height - 2 * shave, W = pred.width - 2 * shave;
  if (H < kWin || W < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window after shaving");

  double g[kWin];
  double gsum = 0.0;
  for (int k = 0; k < kWin; ++k) {
    const double d = k - kWin / 2;
    g[k] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    gsum += g[k];
  }
  for (double& v : g) v /= gsum;

  const Image ya = to_luma(pred), yb = to_luma(gt);
  auto a = [&](std::size_t i, std::size_t j) { return ya.at(0, i + shave, j + shave); };
  auto b = [&](std::size_t i, std::size_t j) { return yb.at(0, i + shave, j + shave); };

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + kWin <= H; ++i) {
    for (std::size_t j = 0; j + kWin <= W; ++j) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int u = 0; u < kWin; ++u)
        for (int v = 0; v < kWin; ++v) {
          const double w = g[u] * g[v];
          const double x = a(i + u, j + v), y = b(i + u, j + v);
          ma += w * x;
          mb += w * y;
          saa += w * x * x;
          sbb += w * y * y;
          sab += w * x * y;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MetricReport evaluate_pair(const Image& pred, const Image& gt, std::size_t shave) {
  return {psnr(pred, gt, PsnrMode::rgb, shave), psnr(pred, gt, PsnrMode::y, shave), ssim(pred, gt, shave), shave};
}

std::size_t default_shave(double scale) { return static_cast<std::size_t>(std::ceil(scale)); }

}  // namespace s3
