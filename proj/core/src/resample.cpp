#include "s3mamba/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace s3 {

double keys_kernel(double x, double a) {
  const double t = std::fabs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<AxisTaps> resample_taps(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw std::invalid_argument("resample: dimensions must be >= 1");
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const double stretch = ratio > 1.0 ? ratio : 1.0;
  const double support = 2.0 * stretch;
  const auto last = static_cast<long>(in) - 1;

  std::vector<AxisTaps> taps(out);
  for (std::size_t d = 0; d < out; ++d) {
    const double center = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    const auto lo = static_cast<long>(std::ceil(center - support));
    const auto hi = static_cast<long>(std::floor(center + support));
    AxisTaps& t = taps[d];
    double total = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double w = keys_kernel((static_cast<double>(i) - center) / stretch);
      if (w == 0.0) continue;
      const auto src = static_cast<std::size_t>(std::clamp(i, 0L, last));
      if (!t.empty() && t.back().first == src) {
        t.back().second += w;
      } else {
        t.emplace_back(src, w);
      }
      total += w;
    }
    for (auto& [idx, w] : t) w /= total;
  }
  return taps;
}

Image bicubic_resample(const Image& img, std::size_t out_h, std::size_t out_w, bool clamp_output) {
  if (img.empty()) throw std::invalid_argument("bicubic_resample: empty input");
  const auto rows = resample_taps(img.height, out_h);
  const auto cols = resample_taps(img.width, out_w);

  // Horizontal pass into [C, in_h, out_w], then vertical.
  Image tmp(img.channels, img.height, out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (const auto& [src, w] : cols[x]) acc += w * img.at(c, y, src);
        tmp.at(c, y, x) = acc;
      }
  Image out(img.channels, out_h, out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (const auto& [src, w] : rows[y]) acc += w * tmp.at(c, src, x);
        out.at(c, y, x) = acc;
      }
  if (clamp_output) clamp01(out);
  return out;
}

double bicubic_point(const Image& img, std::size_t channel, double y, double x) {
  const auto fy = static_cast<long>(std::floor(y));
  const auto fx = static_cast<long>(std::floor(x));
  const long last_y = static_cast<long>(img.height) - 1;
  const long last_x = static_cast<long>(img.width) - 1;
  double wy[4], wx[4];
  for (int k = 0; k < 4; ++k) {
    wy[k] = keys_kernel(static_cast<double>(fy - 1 + k) - y);
    wx[k] = keys_kernel(static_cast<double>(fx - 1 + k) - x);
  }
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto sy = static_cast<std::size_t>(std::clamp(fy - 1 + i, 0L, last_y));
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      const auto sx = static_cast<std::size_t>(std::clamp(fx - 1 + j, 0L, last_x));
      row += wx[j] * img.at(channel, sy, sx);
    }
    acc += wy[i] * row;
  }
  return acc;
}

}  // namespace s3
