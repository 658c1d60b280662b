#include "s3mamba/sssm_block.hpp"

#include <algorithm>
#include <stdexcept>

#include "s3mamba/ops.hpp"

namespace s3 {

MixerKind parse_mixer_kind(const std::string& name) {
  if (name == "mlp") return MixerKind::mlp;
  if (name == "ssm") return MixerKind::ssm;
  if (name == "sssm") return MixerKind::sssm;
  throw std::invalid_argument("unknown mixer kind '" + name + "' (expected mlp, ssm or sssm)");
}

std::string to_string(MixerKind kind) {
  switch (kind) {
    case MixerKind::mlp: return "mlp";
    case MixerKind::ssm: return "ssm";
    case MixerKind::sssm: return "sssm";
  }
  return "?";
}

TokenMixer TokenMixer::create(const MixerConfig& config, SplitMix64& rng) {
  TokenMixer m;
  m.kind = config.kind;
  if (config.kind == MixerKind::mlp) {
    // Bottleneck width mirrors the SSM's per-token projection width so the
    // variants stay close in parameter count.
    const std::size_t hidden = 2 * config.n_state + config.dt_rank;
    m.mlp_in = nn::Linear::create(config.d_inner, hidden, rng);
    m.mlp_out = nn::Linear::create(hidden, config.d_inner, rng);
  } else {
    ssm::SsmConfig sc;
    sc.d_inner = config.d_inner;
    sc.n_state = config.n_state;
    sc.dt_rank = config.dt_rank;
    sc.sigma_hidden = config.sigma_hidden;
    sc.scale_modulation = config.kind == MixerKind::sssm;
    m.ssm = ssm::SsmParams::create(sc, rng);
  }
  return m;
}

Tensor TokenMixer::operator()(const Tensor& seq, const ssm::ScaleContext& ctx) const {
  if (kind == MixerKind::mlp) return mlp_out(silu(mlp_in(seq)));
  return ssm::sssm(seq, ctx, ssm);
}

void TokenMixer::collect(const std::string& prefix, NamedTensors& out) const {
  if (kind == MixerKind::mlp) {
    mlp_in.collect(prefix + "mlp_in.", out);
    mlp_out.collect(prefix + "mlp_out.", out);
  } else {
    ssm.collect(prefix + "ssm.", out);
  }
}

void BlockConfig::validate() const {
  if (d_model < 1) throw std::invalid_argument("BlockConfig: d_model must be >= 1");
  if (inner() < d_model) throw std::invalid_argument("BlockConfig: d_inner must be >= d_model");
  if (n_state < 1) throw std::invalid_argument("BlockConfig: n_state must be >= 1");
}

Tensor FeatureMap::cell_centers(std::size_t height, std::size_t width) {
  Tensor c = Tensor::zeros({height * width, 2});
  auto v = c.mutable_values();
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      v[(i * width + j) * 2 + 0] = -1.0 + static_cast<double>(2 * i + 1) / static_cast<double>(height);
      v[(i * width + j) * 2 + 1] = -1.0 + static_cast<double>(2 * j + 1) / static_cast<double>(width);
    }
  }
  return c;
}

std::vector<std::size_t> scan_order(std::size_t height, std::size_t width, int direction) {
  const std::size_t L = height * width;
  std::vector<std::size_t> order(L);
  switch (direction) {
    case 0:
      for (std::size_t i = 0; i < L; ++i) order[i] = i;
      break;
    case 1:
      for (std::size_t i = 0; i < L; ++i) order[i] = L - 1 - i;
      break;
    case 2:
    case 3: {
      std::size_t t = 0;
      for (std::size_t j = 0; j < width; ++j)
        for (std::size_t i = 0; i < height; ++i) order[t++] = i * width + j;
      if (direction == 3) std::reverse(order.begin(), order.end());
      break;
    }
    default:
      throw std::invalid_argument("scan direction must be in 0..3, got " + std::to_string(direction));
  }
  return order;
}

namespace {

std::vector<std::size_t> inverse(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[order[i]] = i;
  return inv;
}

}  // namespace

Tensor map_to_tokens(const Tensor& chw) {
  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  return transpose(reshape(chw, {C, H * W}));
}

Tensor tokens_to_map(const Tensor& tokens, std::size_t height, std::size_t width) {
  const std::size_t C = tokens.dim(1);
  return reshape(transpose(tokens), {C, height, width});
}

FlatSequence scan_flatten(const FeatureMap& f, int direction) {
  const auto order = scan_order(f.height(), f.width(), direction);
  const Tensor tokens = map_to_tokens(f.values);
  return {gather_rows(tokens, order), gather_rows(f.coords(), order)};
}

FeatureMap scan_unflatten(const Tensor& seq, std::size_t height, std::size_t width, int direction) {
  if (seq.rank() != 2 || seq.dim(0) != height * width) {
    throw ShapeError("scan_unflatten: sequence " + shape_str(seq.shape()) + " does not fit " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const auto inv = inverse(scan_order(height, width, direction));
  return {tokens_to_map(gather_rows(seq, inv), height, width)};
}

SssmBlock SssmBlock::create(const BlockConfig& config, SplitMix64& rng) {
  config.validate();
  SssmBlock b;
  b.config = config;
  const std::size_t Din = config.inner();
  b.norm = nn::LayerNorm::create(config.d_model);
  b.proj_in = nn::Linear::create(config.d_model, Din, rng);
  b.dwconv = nn::Conv2d::create(Din, Din, 3, rng, Din, PaddingMode::zero);
  MixerConfig mc;
  mc.kind = config.kind;
  mc.d_inner = Din;
  mc.n_state = config.n_state;
  mc.dt_rank = config.dt_rank;
  mc.sigma_hidden = config.sigma_hidden;
  b.mixer = TokenMixer::create(mc, rng);
  b.proj_out = nn::Linear::zeros(Din, config.d_model);
  return b;
}

FeatureMap SssmBlock::operator()(const FeatureMap& f, double scale) const {
  return (*this)(f, ssm::ScaleContext{scale, f.coords()});
}

FeatureMap SssmBlock::operator()(const FeatureMap& f, const ssm::ScaleContext& ctx) const {
  if (f.values.rank() != 3 || f.channels() != config.d_model) {
    throw ShapeError("SssmBlock: expected [" + std::to_string(config.d_model) + ",H,W], got " +
                     shape_str(f.values.shape()));
  }
  const std::size_t H = f.height(), W = f.width();
  if (ctx.coords.shape() != Shape{H * W, 2}) {
    throw ShapeError("SssmBlock: context holds " + shape_str(ctx.coords.shape()) +
                     " coordinates for a " + std::to_string(H) + "x" + std::to_string(W) + " map");
  }
  ctx.validate();

  const Tensor tokens = map_to_tokens(f.values);                  // [HW, C]
  const Tensor inner = proj_in(norm(tokens));                     // [HW, Din]
  const Tensor conv = silu(dwconv(tokens_to_map(inner, H, W)));   // [Din, H, W]
  const Tensor seq = map_to_tokens(conv);                         // [HW, Din]

  Tensor merged;
  if (mixer.kind == MixerKind::mlp) {
    // Pointwise: all four directions give the same tokens.
    merged = mixer(seq, ctx);
  } else {
    Tensor acc;
    for (int dir = 0; dir < kScanDirections; ++dir) {
      const auto order = scan_order(H, W, dir);
      const ssm::ScaleContext dctx{ctx.scale, gather_rows(ctx.coords, order)};
      const Tensor y = gather_rows(mixer(gather_rows(seq, order), dctx), inverse(order));
      acc = dir == 0 ? y : add(acc, y);
    }
    merged = mul_scalar(acc, 1.0 / kScanDirections);
  }
  const Tensor out_tokens = proj_out(merged);                     // [HW, C]
  return {add(f.values, tokens_to_map(out_tokens, H, W))};
}

void SssmBlock::collect(const std::string& prefix, NamedTensors& out) const {
  norm.collect(prefix + "norm.", out);
  proj_in.collect(prefix + "proj_in.", out);
  dwconv.collect(prefix + "dwconv.", out);
  mixer.collect(prefix + "mixer.", out);
  proj_out.collect(prefix + "proj_out.", out);
}

}  // namespace s3
