#include <gtest/gtest.h>

#include <cmath>

#include "s3mamba/metrics.hpp"
#include "s3mamba/rng.hpp"

namespace s3 {
namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  Image img(3, h, w);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

// Separate SSIM reference: explicit 11x11 loops over every valid window.
double ssim_reference(const Image& a, const Image& b) {
  const Image ya = to_luma(a), yb = to_luma(b);
  double g[11], gs = 0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
  const double C1 = 0.0001, C2 = 0.0009;
  double total = 0;
  std::size_t n = 0;
  for (std::size_t y = 0; y + 11 <= ya.height; ++y)
    for (std::size_t x = 0; x + 11 <= ya.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double w = g[i] * g[j] / (gs * gs);
          const double p = ya.at(0, y + i, x + j), q = yb.at(0, y + i, x + j);
          ma += w * p;
          mb += w * q;
          saa += w * p * p;
          sbb += w * q * q;
          sab += w * p * q;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + C1) * (2 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++n;
    }
  return total / static_cast<double>(n);
}

TEST(Psnr, UniformOffset) {
  const Image gt = random_image(16, 16, 1, 0.1, 0.8);
  Image pred = gt;
  for (double& v : pred.data) v += 10.0 / 255.0;
  EXPECT_NEAR(psnr(pred, gt, PsnrMode::rgb, 0), 28.1308, 1e-4);
  EXPECT_NEAR(psnr(pred, gt, PsnrMode::rgb, 0), 20 * std::log10(25.5), 1e-10);
}

TEST(Psnr, CapForIdenticalImages) {
  const Image a = random_image(8, 8, 2);
  EXPECT_EQ(psnr(a, a, PsnrMode::rgb, 0), kPsnrCap);
  EXPECT_EQ(psnr(a, a, PsnrMode::y, 2), kPsnrCap);
}

TEST(Psnr, ShaveIgnoresBorder) {
  const Image gt = random_image(12, 12, 3);
  Image pred = gt;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 12; ++i) {
      pred.at(c, 0, i) = 1.0 - pred.at(c, 0, i);
      pred.at(c, i, 11) = 0.0;
    }
  EXPECT_EQ(psnr(pred, gt, PsnrMode::rgb, 1), kPsnrCap);
  EXPECT_LT(psnr(pred, gt, PsnrMode::rgb, 0), 40.0);
}

TEST(Psnr, LumaOffsetOnGray) {
  Image gt(3, 8, 8, 0.4), pred(3, 8, 8, 0.45);
  const double dy = 0.05 * (65.481 + 128.553 + 24.966) / 255.0;
  EXPECT_NEAR(psnr(pred, gt, PsnrMode::y, 0), -20 * std::log10(dy), 1e-10);
}

TEST(Psnr, SizeMismatchThrows) {
  EXPECT_THROW(psnr(Image(3, 4, 4), Image(3, 4, 5), PsnrMode::rgb, 0), std::invalid_argument);
}

TEST(Luma, Bt601Coefficients) {
  Image px(3, 1, 1);
  px.at(0, 0, 0) = 1.0;
  px.at(1, 0, 0) = 0.0;
  px.at(2, 0, 0) = 0.5;
  EXPECT_NEAR(to_luma(px).at(0, 0, 0), (65.481 + 0.5 * 24.966 + 16.0) / 255.0, 1e-15);
}

TEST(Ssim, IdentityIsOne) {
  const Image a = random_image(20, 24, 4);
  EXPECT_EQ(ssim(a, a, 0), 1.0);
}

TEST(Ssim, MatchesLoopReference) {
  const Image a = random_image(17, 19, 5);
  Image b = a;
  SplitMix64 rng(6);
  for (double& v : b.data) v = std::clamp(v + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b, 0), ssim_reference(a, b), 1e-12);
  EXPECT_NEAR(ssim(a, b, 0), ssim(b, a, 0), 1e-15);
}

TEST(Ssim, ConstantImagesClosedForm) {
  Image a(3, 12, 12, 0.2), b(3, 12, 12, 0.7);
  const double gray = 65.481 + 128.553 + 24.966;
  const double ya = (gray * 0.2 + 16) / 255, yb = (gray * 0.7 + 16) / 255;
  EXPECT_NEAR(ssim(a, b, 0), (2 * ya * yb + 1e-4) / (ya * ya + yb * yb + 1e-4), 1e-12);
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(ssim(Image(3, 8, 8), Image(3, 8, 8), 0), std::invalid_argument); }

TEST(Metrics, DefaultShaveIsCeil) {
  EXPECT_EQ(default_shave(2.0), 2u);
  EXPECT_EQ(default_shave(3.5), 4u);
  EXPECT_EQ(default_shave(1.0), 1u);
}

}  // namespace
}  // namespace s3
