#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s3mamba/nn.hpp"
#include "s3mamba/ssm.hpp"
#include "s3mamba/tensor.hpp"

namespace s3 {

/// What sits in the token-mixing slot of a block: a per-token MLP, a plain
/// selective SSM, or the scale-modulated SSM.
enum class MixerKind { mlp, ssm, sssm };

MixerKind parse_mixer_kind(const std::string& name);
std::string to_string(MixerKind kind);

struct MixerConfig {
  MixerKind kind = MixerKind::sssm;
  std::size_t d_inner = 64;
  std::size_t n_state = 8;
  std::size_t dt_rank = 1;
  std::size_t sigma_hidden = 16;
};

struct TokenMixer {
  MixerKind kind = MixerKind::sssm;
  ssm::SsmParams ssm;  // used by ssm / sssm
  nn::Linear mlp_in;   // used by mlp: d_inner -> 2N + dt_rank
  nn::Linear mlp_out;  // used by mlp: 2N + dt_rank -> d_inner

  static TokenMixer create(const MixerConfig& config, SplitMix64& rng);

  // seq: [L, d_inner]; ctx supplies scale and per-token coordinates.
  Tensor operator()(const Tensor& seq, const ssm::ScaleContext& ctx) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct BlockConfig {
  std::size_t d_model = 32;
  std::size_t d_inner = 0;  // 0 selects 2 * d_model
  std::size_t n_state = 8;
  std::size_t dt_rank = 1;
  std::size_t sigma_hidden = 16;
  MixerKind kind = MixerKind::sssm;

  std::size_t inner() const { return d_inner == 0 ? 2 * d_model : d_inner; }
  void validate() const;
};

/// [C, H, W] feature map. Cell centers live on the [-1, 1]^2 grid:
/// coord(i, j) = (-1 + (2i + 1) / H, -1 + (2j + 1) / W).
struct FeatureMap {
  Tensor values;

  std::size_t channels() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
  Tensor coords() const { return cell_centers(height(), width()); }

  // Row-major [H * W, 2] grid of cell centers.
  static Tensor cell_centers(std::size_t height, std::size_t width);
};

/// Directions: 0 row-major, 1 row-major reversed, 2 column-major,
/// 3 column-major reversed.
inline constexpr int kScanDirections = 4;

// order[i] is the row-major position visited at step i.
std::vector<std::size_t> scan_order(std::size_t height, std::size_t width, int direction);

struct FlatSequence {
  Tensor seq;     // [H * W, C]
  Tensor coords;  // [H * W, 2]
};

FlatSequence scan_flatten(const FeatureMap& f, int direction);
FeatureMap scan_unflatten(const Tensor& seq, std::size_t height, std::size_t width, int direction);

// [C, H, W] <-> row-major token sequence [H * W, C].
Tensor map_to_tokens(const Tensor& chw);
Tensor tokens_to_map(const Tensor& tokens, std::size_t height, std::size_t width);

/// out = f + proj_out(mean over 4 directions of mixer(flatten_d(SiLU(DWConv(
/// proj_in(LN(f))))))). The mixer parameters are shared across directions and
/// proj_out starts at zero, so a fresh block is the identity map.
struct SssmBlock {
  BlockConfig config;
  nn::LayerNorm norm;
  nn::Linear proj_in;
  nn::Conv2d dwconv;
  TokenMixer mixer;
  nn::Linear proj_out;

  static SssmBlock create(const BlockConfig& config, SplitMix64& rng);

  // ctx.coords must be the map's row-major cell centers.
  FeatureMap operator()(const FeatureMap& f, const ssm::ScaleContext& ctx) const;
  FeatureMap operator()(const FeatureMap& f, double scale) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

}  // namespace s3
