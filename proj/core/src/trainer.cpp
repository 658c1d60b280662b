#include "s3mamba/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "s3mamba/autodiff.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/resample.hpp"

namespace s3 {

using nlohmann::json;

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  return mean(abs(sub(pred, target)));
}

EvalCase make_eval_case(const Image& hr, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("evaluation scale must be > 0");
  const auto h = static_cast<std::size_t>(std::floor(static_cast<double>(hr.height) / scale));
  const auto w = static_cast<std::size_t>(std::floor(static_cast<double>(hr.width) / scale));
  if (h < 1 || w < 1) throw std::invalid_argument("image too small for scale " + std::to_string(scale));
  const auto gh = std::min(hr.height, static_cast<std::size_t>(std::floor(static_cast<double>(h) * scale)));
  const auto gw = std::min(hr.width, static_cast<std::size_t>(std::floor(static_cast<double>(w) * scale)));
  EvalCase c;
  c.gt = hr.crop(0, 0, gh, gw);
  c.lr = bicubic_resample(c.gt, h, w);
  return c;
}

namespace {

std::size_t shave_for(double scale, long shave) {
  return shave < 0 ? default_shave(scale) : static_cast<std::size_t>(shave);
}

MetricReport average(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.psnr_rgb += r.psnr_rgb;
    m.psnr_y += r.psnr_y;
    m.ssim += r.ssim;
    m.shave = r.shave;
  }
  const double n = static_cast<double>(reports.size());
  m.psnr_rgb /= n;
  m.psnr_y /= n;
  m.ssim /= n;
  return m;
}

}  // namespace

MetricReport evaluate_bicubic(const std::vector<Image>& images, double scale, long shave) {
  std::vector<MetricReport> r;
  for (const auto& img : images) {
    const EvalCase c = make_eval_case(img, scale);
    r.push_back(evaluate_pair(bicubic_resample(c.lr, c.gt.height, c.gt.width), c.gt, shave_for(scale, shave)));
  }
  return average(r);
}

MetricReport evaluate_model(const S3Model& model, const std::vector<Image>& images, double scale, long shave) {
  std::vector<MetricReport> r;
  for (const auto& img : images) {
    const EvalCase c = make_eval_case(img, scale);
    r.push_back(evaluate_pair(upscale(model, c.lr, c.gt.height, c.gt.width, scale), c.gt, shave_for(scale, shave)));
  }
  return average(r);
}

std::vector<EvalRow> evaluate(const S3Model& model, const std::vector<Image>& images,
                              const std::vector<double>& scales, long shave) {
  std::vector<EvalRow> rows;
  for (double s : scales) {
    rows.push_back({s, "model", evaluate_model(model, images, s, shave)});
    rows.push_back({s, "bicubic", evaluate_bicubic(images, s, shave)});
  }
  return rows;
}

std::string csv_header() { return "epoch,loss,psnr_x2,psnr_x3,lr"; }

std::string csv_row(const EpochLog& log) {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%s,%s,%.9g", log.epoch, log.loss, opt(log.psnr_x2).c_str(),
                opt(log.psnr_x3).c_str(), log.lr);
  return buf;
}

namespace {

S3Model init_model(const RunConfig& cfg) {
  SplitMix64 rng(mix_seed(cfg.train.seed, 0x1417ULL));
  return S3Model::create(cfg.model, rng);
}

}  // namespace

Trainer::Trainer(RunConfig cfg, Corpus corpus)
    : cfg_(std::move(cfg)),
      corpus_(std::move(corpus)),
      model_(init_model(cfg_)),
      adam_(model_.parameters(), AdamOptions{cfg_.train.lr}) {
  cfg_.validate();
  if (cfg_.train.epochs > 0 && corpus_.train.empty()) throw std::invalid_argument("training split is empty");
  std::size_t min_dim = SIZE_MAX;
  for (const auto& img : corpus_.train) min_dim = std::min({min_dim, img.height, img.width});
  if (!corpus_.train.empty()) cfg_.data.check_fits(min_dim);
}

EpochLog Trainer::run_epoch() {
  const TrainConfig& t = cfg_.train;
  const double lr = lr_at(t, epoch_);
  adam_.set_lr(lr);
  const std::size_t n = t.samples_per_epoch > 0 ? t.samples_per_epoch : corpus_.train.size();
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += t.batch_size) {
    const std::size_t count = std::min(t.batch_size, n - start);
    adam_.zero_grad();
    for (std::size_t i = 0; i < count; ++i) {
      const SamplePair s = sample_at(corpus_.train, cfg_.data, epoch_, start + i);
      const Tensor pred = model_.forward(s.lr.to_tensor(), s.query.coords, s.query.scale);
      const Tensor loss = l1_loss(pred, s.query.targets);
      const double v = loss.item();
      if (!std::isfinite(v)) {
        active_tape().clear();
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", step " +
                              std::to_string(adam_.step_count() + 1) + " (sample seed " +
                              std::to_string(cfg_.data.seed) + ", epoch index " + std::to_string(epoch_) +
                              ", sample index " + std::to_string(start + i) + ")");
      }
      backward(loss, 1.0 / static_cast<double>(count));
      total += v;
    }
    adam_.step();
  }
  ++epoch_;

  EpochLog log;
  log.epoch = epoch_;
  log.loss = n > 0 ? total / static_cast<double>(n) : 0.0;
  log.lr = lr;
  const bool last = epoch_ == t.epochs;
  if (t.val_every > 0 && !corpus_.val.empty() && (epoch_ % t.val_every == 0 || last)) {
    std::vector<Image> val = corpus_.val;
    if (t.val_images > 0 && val.size() > t.val_images) val.resize(t.val_images);
    log.psnr_x2 = evaluate_model(model_, val, 2.0).psnr_rgb;
    log.psnr_x3 = evaluate_model(model_, val, 3.0).psnr_rgb;
  }
  return log;
}

void Trainer::train(const std::function<void(const Trainer&, const EpochLog&)>& on_epoch) {
  while (epoch_ < cfg_.train.epochs) {
    const EpochLog log = run_epoch();
    if (on_epoch) on_epoch(*this, log);
  }
}

void Trainer::save(const std::filesystem::path& path, bool f32) const {
  Checkpoint c;
  c.version = kCheckpointVersion;
  c.config_json = dump_run_config(cfg_);
  c.epoch = epoch_;
  c.adam_step = adam_.step_count();
  c.adam_lr = adam_.lr();
  c.rng_state = cfg_.data.seed;
  c.params = model_.parameters();
  c.adam_m = adam_.first_moments();
  c.adam_v = adam_.second_moments();
  write_checkpoint(path, c, f32);
}

namespace {

void copy_params(const NamedTensors& from, const NamedTensors& into, const std::string& source) {
  std::map<std::string, const Tensor*> index;
  for (const auto& [name, t] : from) index[name] = &t;
  if (index.size() != into.size()) {
    throw CheckpointError("checkpoint '" + source + "' holds " + std::to_string(index.size()) +
                          " tensors, model expects " + std::to_string(into.size()));
  }
  for (const auto& [name, t] : into) {
    auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint '" + source + "' lacks tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(it->second->shape()) +
                            " in checkpoint, model expects " + shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(it->second->values().begin(), it->second->values().end(), dst.mutable_values().begin());
  }
}

}  // namespace

void Trainer::load(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  const RunConfig saved = parse_run_config(c.config_json);
  if (dump_run_config(RunConfig{{}, saved.model, {}, {}}) != dump_run_config(RunConfig{{}, cfg_.model, {}, {}})) {
    throw CheckpointError("checkpoint '" + path.string() + "' was written for a different model config");
  }
  copy_params(c.params, model_.parameters(), path.string());
  if (c.adam_m.size() != adam_.first_moments().size() || c.adam_v.size() != adam_.second_moments().size()) {
    throw CheckpointError("checkpoint '" + path.string() + "' optimizer state does not match the model");
  }
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    if (c.adam_m[i].size() != adam_.first_moments()[i].size() ||
        c.adam_v[i].size() != adam_.second_moments()[i].size()) {
      throw CheckpointError("checkpoint '" + path.string() + "' optimizer moment sizes do not match");
    }
  }
  adam_.first_moments() = c.adam_m;
  adam_.second_moments() = c.adam_v;
  adam_.set_step_count(c.adam_step);
  adam_.set_lr(c.adam_lr);
  epoch_ = c.epoch;
}

// ---- checkpoint file ----

namespace {

constexpr char kMagic[4] = {'S', '3', 'M', 'B'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint64_t get_le(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_values(std::string& payload, std::span<const double> values, bool f32) {
  for (double v : values) {
    if (f32) {
      put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_u64(payload, std::bit_cast<std::uint64_t>(v));
    }
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, bool f32) {
  std::string payload;
  json tensors = json::array();
  const char* dtype = f32 ? "f32" : "f64";
  auto add = [&](const std::string& section, const std::string& name, const Shape& shape,
                 std::span<const double> values) {
    const std::size_t offset = payload.size();
    put_values(payload, values, f32);
    tensors.push_back({{"section", section},
                       {"name", name},
                       {"shape", shape},
                       {"dtype", dtype},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  };
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& [name, t] = ckpt.params[i];
    add("param", name, t.shape(), t.values());
  }
  for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
    const std::string& name = i < ckpt.params.size() ? ckpt.params[i].first : std::to_string(i);
    add("adam_m", name, {ckpt.adam_m[i].size()}, ckpt.adam_m[i]);
    add("adam_v", name, {ckpt.adam_v[i].size()}, ckpt.adam_v[i]);
  }
  json header;
  header["format"] = "s3mb";
  header["config"] = json::parse(ckpt.config_json);
  header["epoch"] = ckpt.epoch;
  header["adam"] = {{"step", ckpt.adam_step}, {"lr", ckpt.adam_lr}};
  header["rng_state"] = ckpt.rng_state;
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string blob(kMagic, 4);
  put_u32(blob, static_cast<std::uint32_t>(ckpt.version));
  put_u64(blob, text.size());
  blob += text;
  blob += payload;

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("write failed for checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string name = path.string();
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CheckpointError("'" + name + "' is not an S3MB checkpoint");
  }
  Checkpoint c;
  c.version = static_cast<int>(get_le(buf.data() + 4, 4));
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version) + " in '" + name + "'");
  }
  const std::uint64_t hlen = get_le(buf.data() + 8, 8);
  if (hlen > buf.size() - 16) throw CheckpointError("truncated checkpoint header in '" + name + "'");
  json header;
  try {
    header = json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<long>(hlen));
    c.config_json = header.at("config").dump();
    c.epoch = header.at("epoch").get<std::size_t>();
    c.adam_step = header.at("adam").at("step").get<std::int64_t>();
    c.adam_lr = header.at("adam").at("lr").get<double>();
    c.rng_state = header.at("rng_state").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint header in '" + name + "': " + e.what());
  }
  const unsigned char* payload = buf.data() + 16 + hlen;
  const std::size_t payload_size = buf.size() - 16 - hlen;

  try {
    for (const auto& t : header.at("tensors")) {
      const std::string section = t.at("section").get<std::string>();
      const Shape shape = t.at("shape").get<Shape>();
      const std::string dtype = t.at("dtype").get<std::string>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (width == 0) throw CheckpointError("unknown dtype '" + dtype + "' in '" + name + "'");
      const std::size_t n = shape_numel(shape);
      if (offset > payload_size || n * width > payload_size - offset) {
        throw CheckpointError("tensor data out of range in '" + name + "'");
      }
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* p = payload + offset + i * width;
        values[i] = width == 8 ? std::bit_cast<double>(get_le(p, 8))
                               : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4))));
      }
      if (section == "param") {
        c.params.emplace_back(t.at("name").get<std::string>(), Tensor::from(shape, std::move(values), true));
      } else if (section == "adam_m") {
        c.adam_m.push_back(std::move(values));
      } else if (section == "adam_v") {
        c.adam_v.push_back(std::move(values));
      } else {
        throw CheckpointError("unknown section '" + section + "' in '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw CheckpointError("malformed tensor table in '" + name + "': " + e.what());
  }
  return c;
}

S3Model load_model(const std::filesystem::path& path, RunConfig* cfg_out) {
  const Checkpoint c = read_checkpoint(path);
  RunConfig cfg = parse_run_config(c.config_json);
  SplitMix64 rng(0);
  S3Model model = S3Model::create(cfg.model, rng);
  copy_params(c.params, model.parameters(), path.string());
  if (cfg_out) *cfg_out = cfg;
  return model;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<AblationVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds, const Corpus& corpus,
                                         const std::vector<double>& scales,
                                         const std::function<void(const AblationResult&)>& on_result) {
  std::vector<AblationResult> out;
  for (const std::uint64_t seed : seeds) {
    for (const auto& v : variants) {
      RunConfig cfg = base;
      cfg.model = v.model;
      cfg.train.seed = seed;
      cfg.data.seed = seed;
      cfg.train.val_every = 0;
      Trainer trainer(cfg, corpus);
      trainer.train();
      AblationResult r;
      r.variant = v.name;
      r.seed = seed;
      r.parameters = trainer.model().parameter_count();
      for (double s : scales) r.psnr.emplace_back(s, evaluate_model(trainer.model(), corpus.val, s).psnr_rgb);
      if (on_result) on_result(r);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace s3
