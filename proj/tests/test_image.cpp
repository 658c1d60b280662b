#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "s3mamba/image.hpp"
#include "s3mamba/rng.hpp"

namespace s3 {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "s3mamba_test_image";
  fs::create_directories(dir);
  return dir / name;
}

Image quantized_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Image img(3, h, w);
  for (double& v : img.data) v = static_cast<double>(rng.index(256)) / 255.0;
  return img;
}

class ImageFormats : public ::testing::TestWithParam<const char*> {};

TEST_P(ImageFormats, RoundTripIsExactOnQuantizedValues) {
  const Image img = quantized_image(7, 9, 1);
  const fs::path p = temp_path(std::string("rt") + GetParam());
  save_image(p, img);
  const Image back = load_image(p);
  ASSERT_EQ(back.height, 7u);
  ASSERT_EQ(back.width, 9u);
  ASSERT_EQ(back.channels, 3u);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(back.data[i], img.data[i]);
}

INSTANTIATE_TEST_SUITE_P(All, ImageFormats, ::testing::Values(".png", ".ppm"));

TEST(Image, SavingTwiceGivesIdenticalBytes) {
  const Image img = quantized_image(5, 5, 2);
  const fs::path a = temp_path("a.png"), b = temp_path("b.png");
  save_image(a, img);
  save_image(b, img);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Image, QuantizeRoundsAndClamps) {
  Image img(3, 1, 1);
  img.data = {-0.2, 0.5, 1.7};
  const auto q = quantize8(img);
  EXPECT_EQ(q[0], 0);
  EXPECT_EQ(q[1], 128);
  EXPECT_EQ(q[2], 255);
}

TEST(Image, UnreadableInputThrows) {
  EXPECT_THROW(load_image(temp_path("missing.png")), ImageIoError);
  const fs::path junk = temp_path("junk.png");
  std::ofstream(junk) << "not an image";
  EXPECT_THROW(load_image(junk), ImageIoError);
  EXPECT_THROW(save_image(temp_path("x.bmp"), Image(3, 2, 2)), ImageIoError);
}

TEST(Image, CropAndTensorRoundTrip) {
  const Image img = quantized_image(6, 8, 3);
  const Image c = img.crop(1, 2, 3, 4);
  EXPECT_EQ(c.at(2, 0, 0), img.at(2, 1, 2));
  EXPECT_EQ(c.at(1, 2, 3), img.at(1, 3, 5));
  const Image back = Image::from_tensor(img.to_tensor());
  EXPECT_EQ(back.data, img.data);
  EXPECT_THROW(img.crop(4, 0, 3, 1), std::out_of_range);
}

}  // namespace
}  // namespace s3
