#include "s3mamba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "s3mamba/resample.hpp"

namespace s3 {

void DatasetConfig::validate() const {
  if (lr_patch < 1) throw std::invalid_argument("data.lr_patch must be >= 1");
  if (!(scale_min >= 1.0)) throw std::invalid_argument("data.scale_min must be >= 1");
  if (!(scale_max >= scale_min)) throw std::invalid_argument("data.scale_max must be >= data.scale_min");
  if (queries < 1) throw std::invalid_argument("data.queries must be >= 1");
  if (source == "procedural" && image_size < 1) throw std::invalid_argument("data.image_size must be >= 1");
}

void DatasetConfig::check_fits(std::size_t min_dim) const {
  const double need = std::floor(static_cast<double>(lr_patch) * scale_max);
  if (need > static_cast<double>(min_dim)) {
    throw std::invalid_argument("source image too small: lr_patch * scale_max = " + std::to_string(need) +
                                " exceeds the smallest image dimension " + std::to_string(min_dim));
  }
}

SamplePair make_sample(const Image& source, const DatasetConfig& cfg, SplitMix64& rng) {
  const std::size_t p = cfg.lr_patch;
  cfg.check_fits(std::min(source.height, source.width));
  SamplePair s;
  const double drawn = rng.uniform(cfg.scale_min, cfg.scale_max);
  const auto g = static_cast<std::size_t>(std::floor(static_cast<double>(p) * drawn));
  s.scale = drawn;
  s.crop_top = rng.index(source.height - g + 1);
  s.crop_left = rng.index(source.width - g + 1);
  s.gt = source.crop(s.crop_top, s.crop_left, g, g);
  s.lr = bicubic_resample(s.gt, p, p);

  // Partial Fisher-Yates over the crop's pixels; repeats only when Q > g^2.
  const std::size_t total = g * g;
  const std::size_t Q = cfg.queries;
  std::vector<std::size_t> picks;
  picks.reserve(Q);
  if (Q <= total) {
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < Q; ++i) {
      std::swap(pool[i], pool[i + rng.index(total - i)]);
      picks.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < Q; ++i) picks.push_back(rng.index(total));
  }
  std::sort(picks.begin(), picks.end());

  s.query.scale = static_cast<double>(g) / static_cast<double>(p);
  s.query.coords = Tensor::zeros({Q, 2});
  s.query.targets = Tensor::zeros({Q, 3});
  auto c = s.query.coords.mutable_values();
  auto t = s.query.targets.mutable_values();
  const double G = static_cast<double>(g);
  for (std::size_t q = 0; q < Q; ++q) {
    const std::size_t i = picks[q] / g, j = picks[q] % g;
    c[2 * q] = -1.0 + static_cast<double>(2 * i + 1) / G;
    c[2 * q + 1] = -1.0 + static_cast<double>(2 * j + 1) / G;
    for (std::size_t ch = 0; ch < 3; ++ch) t[3 * q + ch] = s.gt.at(ch, i, j);
  }
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t n_images, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n_images);
  for (std::size_t i = 0; i < n_images; ++i) order[i] = i;
  SplitMix64 rng(mix_seed(seed, epoch, 0x0BDE7ULL));
  for (std::size_t i = n_images; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

SamplePair sample_at(const std::vector<Image>& corpus, const DatasetConfig& cfg, std::uint64_t epoch,
                     std::size_t index) {
  if (corpus.empty()) throw std::invalid_argument("sample_at: empty corpus");
  const auto order = epoch_order(corpus.size(), cfg.seed, epoch);
  SplitMix64 rng(mix_seed(cfg.seed, epoch, 0x5A3B1E0000000000ULL + index));
  return make_sample(corpus[order[index % corpus.size()]], cfg, rng);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Image sinusoid(std::size_t size, SplitMix64& rng, ProceduralInfo& info) {
  const std::size_t max_cycles = std::max<std::size_t>(1, size / 8);
  const auto kx = static_cast<double>(1 + rng.index(max_cycles));
  auto ky = static_cast<double>(rng.index(max_cycles + 1));
  if (rng.uniform() < 0.5) ky = -ky;
  info.params.emplace_back("cycles_x", kx);
  info.params.emplace_back("cycles_y", ky);
  Image img(3, size, size);
  const double n = static_cast<double>(size);
  for (std::size_t c = 0; c < 3; ++c) {
    const double amp = rng.uniform(0.2, 0.45);
    const double phase = rng.uniform(0.0, kTwoPi);
    info.params.emplace_back("amp_" + std::to_string(c), amp);
    info.params.emplace_back("phase_" + std::to_string(c), phase);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        img.at(c, y, x) = 0.5 + amp * std::cos(kTwoPi * (kx * static_cast<double>(x) + ky * static_cast<double>(y)) / n +
                                              phase);
  }
  return img;
}

void box_blur(std::vector<double>& v, std::size_t size, std::size_t r) {
  std::vector<double> tmp(v.size());
  const long last = static_cast<long>(size) - 1;
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  const long R = static_cast<long>(r);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      double acc = 0.0;
      for (long d = -R; d <= R; ++d) acc += v[y * size + std::clamp(static_cast<long>(x) + d, 0L, last)];
      tmp[y * size + x] = acc * norm;
    }
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      double acc = 0.0;
      for (long d = -R; d <= R; ++d) acc += tmp[std::clamp(static_cast<long>(y) + d, 0L, last) * size + x];
      v[y * size + x] = acc * norm;
    }
}

Image filtered_noise(std::size_t size, SplitMix64& rng, ProceduralInfo& info) {
  const std::size_t radius = 1 + rng.index(3);
  info.params.emplace_back("blur_radius", static_cast<double>(radius));
  Image img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> v(size * size);
    for (double& x : v) x = rng.normal();
    for (int pass = 0; pass < 3; ++pass) box_blur(v, size, radius);
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    const double target_mean = rng.uniform(0.35, 0.65);
    const double target_sd = rng.uniform(0.08, 0.18);
    info.params.emplace_back("mean_" + std::to_string(c), target_mean);
    info.params.emplace_back("sd_" + std::to_string(c), target_sd);
    for (std::size_t i = 0; i < v.size(); ++i) {
      img.data[c * size * size + i] = std::clamp(target_mean + target_sd * (v[i] - mean) / sd, 0.0, 1.0);
    }
  }
  return img;
}

bool inside(const std::vector<double>& px, const std::vector<double>& py, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = px.size() - 1; i < px.size(); j = i++) {
    if ((py[i] > y) != (py[j] > y) && x < (px[j] - px[i]) * (y - py[i]) / (py[j] - py[i]) + px[i]) in = !in;
  }
  return in;
}

Image polygons(std::size_t size, SplitMix64& rng, ProceduralInfo& info) {
  Image img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c) {
    const double bg = rng.uniform(0.1, 0.9);
    std::fill(img.data.begin() + static_cast<long>(c * size * size),
              img.data.begin() + static_cast<long>((c + 1) * size * size), bg);
  }
  const std::size_t count = 2 + rng.index(4);
  info.params.emplace_back("polygons", static_cast<double>(count));
  const double n = static_cast<double>(size);
  for (std::size_t k = 0; k < count; ++k) {
    const double cx = rng.uniform(0.0, n), cy = rng.uniform(0.0, n);
    const double radius = rng.uniform(0.1, 0.35) * n;
    const std::size_t verts = 3 + rng.index(5);
    std::vector<double> angles(verts);
    for (double& a : angles) a = rng.uniform(0.0, kTwoPi);
    std::sort(angles.begin(), angles.end());
    std::vector<double> px(verts), py(verts);
    for (std::size_t v = 0; v < verts; ++v) {
      const double r = radius * rng.uniform(0.6, 1.0);
      px[v] = cx + r * std::cos(angles[v]);
      py[v] = cy + r * std::sin(angles[v]);
    }
    double color[3];
    for (double& col : color) col = rng.uniform(0.0, 1.0);
    // 2x2 supersampling for partially covered pixels.
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            hits += inside(px, py, static_cast<double>(x) + 0.25 + 0.5 * sx, static_cast<double>(y) + 0.25 + 0.5 * sy);
        if (hits == 0) continue;
        const double cov = hits / 4.0;
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - cov) * img.at(c, y, x) + cov * color[c];
      }
  }
  return img;
}

}  // namespace

std::vector<ProceduralImage> procedural_corpus(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (n > 0 && size < 1) throw std::invalid_argument("procedural_corpus: size must be >= 1");
  std::vector<ProceduralImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(mix_seed(seed, i, 0xC0FFEEULL));
    ProceduralImage p;
    switch (i % 4) {
      case 0:
        p.info.kind = "sinusoid";
        p.image = sinusoid(size, rng, p.info);
        break;
      case 1:
        p.info.kind = "noise";
        p.image = filtered_noise(size, rng, p.info);
        break;
      case 2:
        p.info.kind = "polygons";
        p.image = polygons(size, rng, p.info);
        break;
      default: {
        p.info.kind = "mixture";
        ProceduralInfo scratch;
        const Image a = sinusoid(size, rng, scratch);
        const Image b = filtered_noise(size, rng, scratch);
        const Image c = polygons(size, rng, scratch);
        double w[3] = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
        const double total = w[0] + w[1] + w[2];
        for (double& x : w) x /= total;
        p.info.params = std::move(scratch.params);
        p.info.params.emplace_back("weight_sinusoid", w[0]);
        p.info.params.emplace_back("weight_noise", w[1]);
        p.info.params.emplace_back("weight_polygons", w[2]);
        p.image = Image(3, size, size);
        for (std::size_t k = 0; k < p.image.data.size(); ++k) {
          p.image.data[k] = w[0] * a.data[k] + w[1] * b.data[k] + w[2] * c.data[k];
        }
        break;
      }
    }
    clamp01(p.image);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Image> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ImageIoError("corpus directory not found: '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

Corpus load_corpus(const DatasetConfig& cfg) {
  Corpus c;
  if (cfg.source == "procedural") {
    auto imgs = procedural_corpus(cfg.train_images + cfg.val_images, cfg.image_size, cfg.seed);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      (i < cfg.train_images ? c.train : c.val).push_back(std::move(imgs[i].image));
    }
  } else {
    const std::filesystem::path root(cfg.source);
    c.train = load_image_dir(root / "train");
    if (std::filesystem::is_directory(root / "val")) c.val = load_image_dir(root / "val");
  }
  return c;
}

}  // namespace s3
