#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "s3mamba/config.hpp"

namespace s3::testing {

// A run small enough for unit tests: 4 + 2 images of 32x32, 8x8 LR patches.
inline RunConfig tiny_run() {
  RunConfig c;
  c.data.train_images = 4;
  c.data.val_images = 2;
  c.data.image_size = 32;
  c.data.lr_patch = 8;
  c.data.queries = 16;
  c.data.scale_max = 3.0;
  c.data.seed = 11;
  c.model.d_model = 8;
  c.model.n_resblocks = 1;
  c.model.n_blocks = 1;
  c.model.n_state = 4;
  c.model.sigma_hidden = 4;
  c.model.decoder_width = 16;
  c.train.epochs = 2;
  c.train.batch_size = 2;
  c.train.lr = 1e-3;
  c.train.decay_epochs = 1;
  c.train.save_every = 1;
  c.train.val_every = 0;
  c.train.seed = 5;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "s3mamba_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace s3::testing
