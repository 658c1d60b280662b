#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s3mamba/image.hpp"
#include "s3mamba/nn.hpp"
#include "s3mamba/sssm_block.hpp"
#include "s3mamba/tensor.hpp"

namespace s3 {

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_resblocks = 4;
  std::size_t n_blocks = 2;         // SSSM blocks in the global branch
  std::size_t n_state = 8;
  std::size_t dt_rank = 1;
  std::size_t sigma_hidden = 16;
  std::size_t decoder_width = 64;
  // Token mixer used at every SSM site (global blocks and decoder layers).
  MixerKind decoder = MixerKind::sssm;
  bool use_gfe = true;              // false: F_global = F_LR
  bool use_sfatt = true;            // false: no attention gate
  bool residual_bicubic = false;    // predict a correction to the bicubic estimate

  void validate() const;
  std::size_t fusion_channels() const { return 10 * d_model; }
  std::size_t query_features() const { return fusion_channels() + 4; }
};

/// conv3x3 -> SiLU -> conv3x3, plus the input.
struct ResBlock {
  nn::Conv2d conv1;
  nn::Conv2d conv2;

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Shallow convolutional feature extractor: [3,h,w] -> [C,h,w].
struct Backbone {
  nn::Conv2d head;
  std::vector<ResBlock> body;
  nn::Conv2d tail;

  static Backbone create(std::size_t channels, std::size_t n_resblocks, SplitMix64& rng);
  Tensor operator()(const Tensor& lr) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// y = x + proj_out(mixer(SiLU(proj_in(LN(x))))) over a [Q, width] query
/// sequence; proj_out starts at zero.
struct SequenceLayer {
  nn::LayerNorm norm;
  nn::Linear proj_in;
  TokenMixer mixer;
  nn::Linear proj_out;

  static SequenceLayer create(std::size_t width, const ModelConfig& config, SplitMix64& rng);
  Tensor operator()(const Tensor& x, const ssm::ScaleContext& ctx) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// alpha = sigmoid(layer_alpha(embed(coord, s))); F' = layer_f(alpha * proj(F_HR));
/// logits = head(layer_rgb(F')). Without the gate, F' = layer_f(proj(F_HR)).
struct Decoder {
  nn::Linear feature_proj;
  bool gated = true;
  nn::Linear gate_embed;
  SequenceLayer gate_layer;
  SequenceLayer feature_layer;
  SequenceLayer rgb_layer;
  nn::Linear head;  // zero-initialized

  static Decoder create(const ModelConfig& config, SplitMix64& rng);
  // Returns the pre-activation RGB logits [Q, 3].
  Tensor operator()(const Tensor& f_hr, const ssm::ScaleContext& ctx) const;
  // The attention map alone, [Q, width]; requires a gated decoder.
  Tensor attention(const ssm::ScaleContext& ctx) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// [C,H,W] -> [9C,H,W]; channel k*C + c holds channel c of the neighbour at
/// offset (k / 3 - 1, k % 3 - 1), replicate padding at the border.
Tensor unfold_local(const Tensor& f);

/// Nearest LR cell for a coordinate in [-1, 1] on an axis with n cells.
std::size_t nearest_cell(double coord, std::size_t n);

/// F_HR [Q, 10C + 4]: the fusion vector of each query's nearest LR cell
/// followed by (rel_0 * H, rel_1 * W, s, 1/s) where rel = coord - cell center.
/// fusion_tokens is row-major [H * W, 10C].
Tensor gather_query_features(const Tensor& fusion_tokens, std::size_t height, std::size_t width,
                             const Tensor& coords, double scale);

/// Bicubic estimate of the LR image at each query coordinate, [Q, 3].
Tensor bicubic_query_base(const Tensor& lr, const Tensor& coords);

struct S3Model {
  ModelConfig config;
  Backbone backbone;
  std::vector<SssmBlock> blocks;
  Decoder decoder;

  static S3Model create(const ModelConfig& config, SplitMix64& rng);

  Tensor extract(const Tensor& lr) const;                      // F_LR [C,h,w]
  Tensor global_features(const Tensor& f_lr, double scale) const;
  Tensor fusion_tokens(const Tensor& f_lr, double scale) const;  // [h*w, 10C]

  /// lr: [3,h,w] in [0,1]; coords: [Q,2] HR queries in raster order.
  /// Returns RGB [Q,3] in [0,1].
  Tensor forward(const Tensor& lr, const Tensor& coords, double scale) const;

  NamedTensors parameters() const;
  std::size_t parameter_count() const;
};

/// Row-major cell centers of an out_h x out_w grid, [out_h * out_w, 2].
Tensor query_grid(std::size_t out_h, std::size_t out_w);

/// Queries every cell center of an out_h x out_w grid in one sequence.
Image upscale(const S3Model& model, const Image& lr, std::size_t out_h, std::size_t out_w, double scale);

}  // namespace s3
