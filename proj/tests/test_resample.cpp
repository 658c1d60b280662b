#include <gtest/gtest.h>

#include <cmath>

#include "s3mamba/resample.hpp"
#include "s3mamba/rng.hpp"

namespace s3 {
namespace {

TEST(Keys, KernelValues) {
  EXPECT_EQ(keys_kernel(0.0), 1.0);
  EXPECT_EQ(keys_kernel(1.0), 0.0);
  EXPECT_EQ(keys_kernel(2.0), 0.0);
  EXPECT_EQ(keys_kernel(-2.5), 0.0);
  EXPECT_DOUBLE_EQ(keys_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(keys_kernel(-1.5), -0.0625);
}

TEST(Keys, KernelPartitionOfUnity) {
  for (double t : {0.0, 0.1, 0.37, 0.5, 0.93}) {
    double s = 0, m = 0;
    for (int k = -3; k <= 3; ++k) {
      s += keys_kernel(t - k);
      m += keys_kernel(t - k) * k;
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_NEAR(m, t, 1e-15);
  }
}

TEST(Resample, TapsNormalisedAndClamped) {
  for (auto [in, out] : {std::pair<std::size_t, std::size_t>{8, 24}, {24, 8}, {10, 7}, {5, 5}}) {
    const auto taps = resample_taps(in, out);
    ASSERT_EQ(taps.size(), out);
    for (const auto& t : taps) {
      double s = 0;
      for (const auto& [i, w] : t) {
        EXPECT_LT(i, in);
        s += w;
      }
      EXPECT_NEAR(s, 1.0, 1e-15);
    }
  }
}

TEST(Resample, SameSizeIsIdentity) {
  SplitMix64 rng(1);
  Image img(3, 7, 5);
  for (double& v : img.data) v = rng.uniform(0, 1);
  const Image r = bicubic_resample(img, 7, 5);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(r.data[i], img.data[i], 1e-15);
}

TEST(Resample, HorizontalRampDownscaledByTwo) {
  // f(x) = x / 31 on a 32-wide ramp; output pixel j maps to 2j + 0.5.
  Image img(1, 4, 32);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 32; ++x) img.at(0, y, x) = static_cast<double>(x) / 31.0;
  const Image r = bicubic_resample(img, 2, 16, false);
  for (std::size_t j : {2, 5, 8, 11, 13}) EXPECT_NEAR(r.at(0, 1, j), (2.0 * j + 0.5) / 31.0, 1e-12) << j;
}

TEST(Resample, OutputClampedUnlessDisabled) {
  Image img(1, 4, 4, 0.0);
  img.at(0, 1, 1) = 1.0;
  img.at(0, 2, 2) = 1.0;
  const Image c = bicubic_resample(img, 12, 12);
  const Image u = bicubic_resample(img, 12, 12, false);
  double lo = 1, ulo = 1;
  for (double v : c.data) lo = std::min(lo, v);
  for (double v : u.data) ulo = std::min(ulo, v);
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(ulo, 0.0);  // Keys overshoot
}

TEST(Resample, BicubicPointAtCentersReturnsPixels) {
  SplitMix64 rng(2);
  Image img(1, 5, 6);
  for (double& v : img.data) v = rng.uniform(0, 1);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x)
      EXPECT_NEAR(bicubic_point(img, 0, static_cast<double>(y), static_cast<double>(x)), img.at(0, y, x), 1e-15);
}

TEST(Resample, BicubicPointReproducesAffineInside) {
  Image img(1, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(0, y, x) = 0.1 + 0.03 * x - 0.02 * y;
  EXPECT_NEAR(bicubic_point(img, 0, 3.3, 4.6), 0.1 + 0.03 * 4.6 - 0.02 * 3.3, 1e-14);
}

}  // namespace
}  // namespace s3
