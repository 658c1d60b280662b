#include "s3mamba/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s3mamba/autodiff.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/resample.hpp"

namespace s3 {

void ModelConfig::validate() const {
  if (d_model < 1) throw std::invalid_argument("model.d_model must be >= 1");
  if (n_state < 1) throw std::invalid_argument("model.n_state must be >= 1");
  if (dt_rank < 1) throw std::invalid_argument("model.dt_rank must be >= 1");
  if (sigma_hidden < 1) throw std::invalid_argument("model.sigma_hidden must be >= 1");
  if (decoder_width < 1) throw std::invalid_argument("model.decoder_width must be >= 1");
}

Tensor ResBlock::operator()(const Tensor& x) const { return add(x, conv2(silu(conv1(x)))); }

void ResBlock::collect(const std::string& prefix, NamedTensors& out) const {
  conv1.collect(prefix + "conv1.", out);
  conv2.collect(prefix + "conv2.", out);
}

Backbone Backbone::create(std::size_t channels, std::size_t n_resblocks, SplitMix64& rng) {
  Backbone b;
  b.head = nn::Conv2d::create(3, channels, 3, rng, 1, PaddingMode::replicate);
  for (std::size_t i = 0; i < n_resblocks; ++i) {
    b.body.push_back({nn::Conv2d::create(channels, channels, 3, rng, 1, PaddingMode::replicate),
                      nn::Conv2d::create(channels, channels, 3, rng, 1, PaddingMode::replicate)});
  }
  b.tail = nn::Conv2d::create(channels, channels, 3, rng, 1, PaddingMode::replicate);
  return b;
}

Tensor Backbone::operator()(const Tensor& lr) const {
  const Tensor shallow = head(add_scalar(lr, -0.5));
  Tensor h = shallow;
  for (const auto& rb : body) h = rb(h);
  return add(tail(h), shallow);
}

void Backbone::collect(const std::string& prefix, NamedTensors& out) const {
  head.collect(prefix + "head.", out);
  for (std::size_t i = 0; i < body.size(); ++i) body[i].collect(prefix + "body." + std::to_string(i) + ".", out);
  tail.collect(prefix + "tail.", out);
}

SequenceLayer SequenceLayer::create(std::size_t width, const ModelConfig& config, SplitMix64& rng) {
  SequenceLayer l;
  const std::size_t inner = 2 * width;
  l.norm = nn::LayerNorm::create(width);
  l.proj_in = nn::Linear::create(width, inner, rng);
  MixerConfig mc;
  mc.kind = config.decoder;
  mc.d_inner = inner;
  mc.n_state = config.n_state;
  mc.dt_rank = config.dt_rank;
  mc.sigma_hidden = config.sigma_hidden;
  l.mixer = TokenMixer::create(mc, rng);
  l.proj_out = nn::Linear::zeros(inner, width);
  return l;
}

Tensor SequenceLayer::operator()(const Tensor& x, const ssm::ScaleContext& ctx) const {
  return add(x, proj_out(mixer(silu(proj_in(norm(x))), ctx)));
}

void SequenceLayer::collect(const std::string& prefix, NamedTensors& out) const {
  norm.collect(prefix + "norm.", out);
  proj_in.collect(prefix + "proj_in.", out);
  mixer.collect(prefix + "mixer.", out);
  proj_out.collect(prefix + "proj_out.", out);
}

Decoder Decoder::create(const ModelConfig& config, SplitMix64& rng) {
  Decoder d;
  const std::size_t w = config.decoder_width;
  d.feature_proj = nn::Linear::create(config.query_features(), w, rng);
  d.gated = config.use_sfatt;
  if (d.gated) {
    d.gate_embed = nn::Linear::create(4, w, rng);
    d.gate_layer = SequenceLayer::create(w, config, rng);
  }
  d.feature_layer = SequenceLayer::create(w, config, rng);
  d.rgb_layer = SequenceLayer::create(w, config, rng);
  d.head = nn::Linear::zeros(w, 3);
  return d;
}

Tensor Decoder::attention(const ssm::ScaleContext& ctx) const {
  if (!gated) throw std::logic_error("Decoder::attention: decoder has no attention gate");
  return sigmoid(gate_layer(gate_embed(ssm::scale_features(ctx)), ctx));
}

Tensor Decoder::operator()(const Tensor& f_hr, const ssm::ScaleContext& ctx) const {
  Tensor h = feature_proj(f_hr);
  if (gated) h = mul(attention(ctx), h);
  return head(rgb_layer(feature_layer(h, ctx), ctx));
}

void Decoder::collect(const std::string& prefix, NamedTensors& out) const {
  feature_proj.collect(prefix + "feature_proj.", out);
  if (gated) {
    gate_embed.collect(prefix + "gate_embed.", out);
    gate_layer.collect(prefix + "gate_layer.", out);
  }
  feature_layer.collect(prefix + "feature_layer.", out);
  rgb_layer.collect(prefix + "rgb_layer.", out);
  head.collect(prefix + "head.", out);
}

namespace {

std::vector<std::size_t> neighbour_index(std::size_t H, std::size_t W, int di, int dj) {
  std::vector<std::size_t> idx(H * W);
  const long last_i = static_cast<long>(H) - 1, last_j = static_cast<long>(W) - 1;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const long si = std::clamp(static_cast<long>(i) + di, 0L, last_i);
      const long sj = std::clamp(static_cast<long>(j) + dj, 0L, last_j);
      idx[i * W + j] = static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj);
    }
  return idx;
}

std::vector<Tensor> local_parts(const Tensor& tokens, std::size_t H, std::size_t W) {
  std::vector<Tensor> parts;
  parts.reserve(10);
  for (int k = 0; k < 9; ++k) parts.push_back(gather_rows(tokens, neighbour_index(H, W, k / 3 - 1, k % 3 - 1)));
  return parts;
}

}  // namespace

Tensor unfold_local(const Tensor& f) {
  if (f.rank() != 3) throw ShapeError("unfold_local: expected [C,H,W], got " + shape_str(f.shape()));
  const std::size_t H = f.dim(1), W = f.dim(2);
  const auto parts = local_parts(map_to_tokens(f), H, W);
  return tokens_to_map(concat(std::span<const Tensor>(parts), 1), H, W);
}

std::size_t nearest_cell(double coord, std::size_t n) {
  const double pos = std::floor((coord + 1.0) * 0.5 * static_cast<double>(n));
  if (pos <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(pos), n - 1);
}

Tensor gather_query_features(const Tensor& fusion_tokens, std::size_t height, std::size_t width,
                             const Tensor& coords, double scale) {
  if (coords.rank() != 2 || coords.dim(1) != 2 || coords.dim(0) == 0) {
    throw ShapeError("gather_query_features: coords must be [Q>=1, 2], got " + shape_str(coords.shape()));
  }
  if (fusion_tokens.rank() != 2 || fusion_tokens.dim(0) != height * width) {
    throw ShapeError("gather_query_features: fusion tokens " + shape_str(fusion_tokens.shape()) +
                     " do not match a " + std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  const std::size_t Q = coords.dim(0);
  const auto c = coords.values();
  std::vector<std::size_t> cell(Q);
  Tensor extra = Tensor::zeros({Q, 4});
  auto e = extra.mutable_values();
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  for (std::size_t q = 0; q < Q; ++q) {
    const std::size_t i = nearest_cell(c[2 * q], height);
    const std::size_t j = nearest_cell(c[2 * q + 1], width);
    cell[q] = i * width + j;
    const double ci = -1.0 + static_cast<double>(2 * i + 1) / H;
    const double cj = -1.0 + static_cast<double>(2 * j + 1) / W;
    e[4 * q + 0] = (c[2 * q] - ci) * H;
    e[4 * q + 1] = (c[2 * q + 1] - cj) * W;
    e[4 * q + 2] = scale;
    e[4 * q + 3] = 1.0 / scale;
  }
  return concat({gather_rows(fusion_tokens, cell), extra}, 1);
}

Tensor bicubic_query_base(const Tensor& lr, const Tensor& coords) {
  const Image img = Image::from_tensor(lr.detach());
  const std::size_t Q = coords.dim(0);
  const auto c = coords.values();
  Tensor base = Tensor::zeros({Q, 3});
  auto b = base.mutable_values();
  for (std::size_t q = 0; q < Q; ++q) {
    const double y = (c[2 * q] + 1.0) * 0.5 * static_cast<double>(img.height) - 0.5;
    const double x = (c[2 * q + 1] + 1.0) * 0.5 * static_cast<double>(img.width) - 0.5;
    for (std::size_t ch = 0; ch < 3; ++ch) b[3 * q + ch] = std::clamp(bicubic_point(img, ch, y, x), 0.0, 1.0);
  }
  return base;
}

S3Model S3Model::create(const ModelConfig& config, SplitMix64& rng) {
  config.validate();
  S3Model m;
  m.config = config;
  m.backbone = Backbone::create(config.d_model, config.n_resblocks, rng);
  if (config.use_gfe) {
    BlockConfig bc;
    bc.d_model = config.d_model;
    bc.n_state = config.n_state;
    bc.dt_rank = config.dt_rank;
    bc.sigma_hidden = config.sigma_hidden;
    bc.kind = config.decoder;
    for (std::size_t i = 0; i < config.n_blocks; ++i) m.blocks.push_back(SssmBlock::create(bc, rng));
  }
  m.decoder = Decoder::create(config, rng);
  return m;
}

Tensor S3Model::extract(const Tensor& lr) const {
  if (lr.rank() != 3 || lr.dim(0) != 3) throw ShapeError("S3Model: LR must be [3,h,w], got " + shape_str(lr.shape()));
  return backbone(lr);
}

Tensor S3Model::global_features(const Tensor& f_lr, double scale) const {
  FeatureMap f{f_lr};
  for (const auto& b : blocks) f = b(f, scale);
  return f.values;
}

Tensor S3Model::fusion_tokens(const Tensor& f_lr, double scale) const {
  const std::size_t H = f_lr.dim(1), W = f_lr.dim(2);
  const Tensor tokens = map_to_tokens(f_lr);
  auto parts = local_parts(tokens, H, W);
  parts.push_back(config.use_gfe ? map_to_tokens(global_features(f_lr, scale)) : tokens);
  return concat(std::span<const Tensor>(parts), 1);
}

Tensor S3Model::forward(const Tensor& lr, const Tensor& coords, double scale) const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("S3Model: scale must be positive, got " + std::to_string(scale));
  }
  const Tensor f_lr = extract(lr);
  const std::size_t H = f_lr.dim(1), W = f_lr.dim(2);
  const Tensor f_hr = gather_query_features(fusion_tokens(f_lr, scale), H, W, coords, scale);
  const Tensor logits = decoder(f_hr, ssm::ScaleContext{scale, coords});
  if (!config.residual_bicubic) return sigmoid(logits);
  return add(sigmoid(logits), add_scalar(bicubic_query_base(lr, coords), -0.5));
}

NamedTensors S3Model::parameters() const {
  NamedTensors out;
  backbone.collect("backbone.", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("gfe." + std::to_string(i) + ".", out);
  decoder.collect("decoder.", out);
  return out;
}

std::size_t S3Model::parameter_count() const { return nn::parameter_count(parameters()); }

Tensor query_grid(std::size_t out_h, std::size_t out_w) { return FeatureMap::cell_centers(out_h, out_w); }

Image upscale(const S3Model& model, const Image& lr, std::size_t out_h, std::size_t out_w, double scale) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("upscale: output size must be >= 1");
  NoGradGuard guard;
  const Tensor rgb = model.forward(lr.to_tensor(), query_grid(out_h, out_w), scale);
  Image out(3, out_h, out_w);
  const auto v = rgb.values();
  for (std::size_t p = 0; p < out_h * out_w; ++p)
    for (std::size_t c = 0; c < 3; ++c) out.data[c * out_h * out_w + p] = std::clamp(v[3 * p + c], 0.0, 1.0);
  return out;
}

}  // namespace s3
