#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "s3mamba/image.hpp"
#include "s3mamba/rng.hpp"
#include "s3mamba/tensor.hpp"

namespace s3 {

struct DatasetConfig {
  std::string source = "procedural";  // "procedural" or a corpus directory
  std::size_t lr_patch = 24;
  double scale_min = 1.0;
  double scale_max = 4.0;
  std::size_t queries = 64;
  std::uint64_t seed = 0;
  // Procedural source only.
  std::size_t train_images = 32;
  std::size_t val_images = 8;
  std::size_t image_size = 96;

  void validate() const;
  // ceil(p * s_max) must fit in the smallest source image.
  void check_fits(std::size_t min_dim) const;
};

struct QueryBatch {
  Tensor coords;   // [Q, 2] in [-1, 1], raster-major
  double scale = 1.0;
  Tensor targets;  // [Q, 3]
};

struct SamplePair {
  Image lr;      // [3, p, p]
  QueryBatch query;
  double scale = 1.0;  // the drawn s
  Image gt;      // the floor(p s) x floor(p s) crop
  std::size_t crop_top = 0;
  std::size_t crop_left = 0;
};

/// s ~ U(s_min, s_max); a random floor(p s) crop; LR = bicubic_resample(crop,
/// p, p); Q distinct query pixels drawn uniformly from the crop, sorted in
/// raster order. The query scale is the realized ratio floor(p s) / p.
SamplePair make_sample(const Image& source, const DatasetConfig& cfg, SplitMix64& rng);

/// Image visiting order for one epoch: a Fisher-Yates shuffle seeded by
/// (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n_images, std::uint64_t seed, std::uint64_t epoch);

/// Sample `index` of `epoch`: a pure function of (seed, epoch, index).
SamplePair sample_at(const std::vector<Image>& corpus, const DatasetConfig& cfg, std::uint64_t epoch,
                     std::size_t index);

/// Parameters behind one procedural image, for the manifest.
struct ProceduralInfo {
  std::string kind;  // sinusoid | noise | polygons | mixture
  std::vector<std::pair<std::string, double>> params;
};

struct ProceduralImage {
  Image image;
  ProceduralInfo info;
};

inline constexpr int kGeneratorVersion = 1;

/// Deterministic synthetic textures in [0, 1]. Kinds cycle through oriented
/// sinusoids (integer cycles per image), band-limited noise, filled polygons
/// and a blend of all three.
std::vector<ProceduralImage> procedural_corpus(std::size_t n, std::size_t size, std::uint64_t seed);

struct Corpus {
  std::vector<Image> train;
  std::vector<Image> val;
};

/// Builds the procedural corpus (train, then val drawn from one stream) or
/// reads DIR/{train,val}/*.png|*.ppm in name order.
Corpus load_corpus(const DatasetConfig& cfg);
std::vector<Image> load_image_dir(const std::filesystem::path& dir);

}  // namespace s3
