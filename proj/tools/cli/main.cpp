// s3mamba command-line tool.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "s3mamba/config.hpp"
#include "s3mamba/dataset.hpp"
#include "s3mamba/image.hpp"
#include "s3mamba/model.hpp"
#include "s3mamba/trainer.hpp"
#include "verify/bench.hpp"
#include "verify/experiments.hpp"
#include "verify/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3 };

// Thrown for bad flags or inputs; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string index_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu%s", i, ext);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create directory " + dir.string());
}

void check_scales(const std::vector<double>& scales) {
  if (scales.empty()) throw UsageError("no scales given");
  for (double s : scales)
    if (!(s > 0.0) || !std::isfinite(s)) throw UsageError("scale must be positive, got " + std::to_string(s));
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

// ---- gen-data ----

struct GenDataArgs {
  std::string out;
  std::size_t n = 32;
  std::size_t val = 0;
  std::size_t size = 96;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.size < 8) throw UsageError("--size must be at least 8");
  const fs::path root(a.out);
  ensure_dir(root / "train");
  if (a.val > 0) ensure_dir(root / "val");

  const auto images = s3::procedural_corpus(a.n + a.val, a.size, a.seed);
  json list = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const bool train = i < a.n;
    const std::size_t k = train ? i : i - a.n;
    const fs::path rel = fs::path(train ? "train" : "val") / index_name(k, ".png");
    s3::save_image(root / rel, images[i].image);
    json params = json::object();
    for (const auto& [name, v] : images[i].info.params) params[name] = v;
    list.push_back({{"file", rel.generic_string()},
                    {"split", train ? "train" : "val"},
                    {"kind", images[i].info.kind},
                    {"params", params}});
  }
  const json manifest = {{"generator_version", s3::kGeneratorVersion},
                         {"seed", a.seed},
                         {"size", a.size},
                         {"train", a.n},
                         {"val", a.val},
                         {"images", list}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << images.size() << " images to " << root.string() << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  bool f32 = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  if (!fs::exists(a.config)) throw UsageError("config file not found: " + a.config);
  const s3::RunConfig cfg = s3::load_run_config(a.config);
  const fs::path out(a.out);
  ensure_dir(out);
  write_text(out / "config.effective.json", s3::dump_run_config(cfg));

  s3::Corpus corpus = s3::load_corpus(cfg.data);
  if (corpus.train.empty()) throw UsageError("training corpus is empty: " + cfg.data.source);
  s3::Trainer trainer(cfg, std::move(corpus));
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw UsageError("checkpoint not found: " + a.resume);
    trainer.load(a.resume);
  }

  const fs::path log_path = out / "train_log.csv";
  const bool append = !a.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw UsageError("cannot write " + log_path.string());
  if (!append) log << s3::csv_header() << "\n";

  try {
    trainer.train([&](const s3::Trainer& t, const s3::EpochLog& e) {
      log << s3::csv_row(e) << "\n";
      log.flush();
      const std::size_t total = t.config().train.epochs;
      const std::size_t every = t.config().train.save_every;
      if (e.epoch == total || (every > 0 && e.epoch % every == 0)) {
        t.save(out / ("ckpt_" + index_name(e.epoch, ".s3mb")), a.f32);
      }
      if (!a.quiet) {
        std::cerr << "epoch " << e.epoch << "/" << total << " loss " << fmt(e.loss, 5);
        if (e.psnr_x2) std::cerr << " x2 " << fmt(*e.psnr_x2);
        if (e.psnr_x3) std::cerr << " x3 " << fmt(*e.psnr_x3);
        std::cerr << " lr " << e.lr << "\n";
      }
    });
  } catch (const s3::DivergenceError& e) {
    std::cerr << "train: diverged: " << e.what() << "\n";
    return kDiverged;
  }
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt;
  std::string corpus;
  std::vector<double> scales = {2.0, 3.0, 3.5, 4.0, 6.0};
  std::string out;
  long shave = -1;
};

std::vector<s3::Image> eval_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("corpus directory not found: " + dir.string());
  for (const char* sub : {"val", "test"})
    if (fs::is_directory(dir / sub)) return s3::load_image_dir(dir / sub);
  return s3::load_image_dir(dir);
}

int cmd_eval(const EvalArgs& a) {
  check_scales(a.scales);
  if (!fs::exists(a.ckpt)) throw UsageError("checkpoint not found: " + a.ckpt);
  const s3::S3Model model = s3::load_model(a.ckpt);
  const auto images = eval_images(a.corpus);
  if (images.empty()) throw UsageError("no images in " + a.corpus);

  const auto rows = s3::evaluate(model, images, a.scales, a.shave);
  std::ostringstream csv;
  csv << "scale,method,psnr_rgb,psnr_y,ssim\n";
  for (const auto& r : rows) {
    csv << r.scale << "," << r.method << "," << fmt(r.metrics.psnr_rgb, 6) << "," << fmt(r.metrics.psnr_y, 6) << ","
        << fmt(r.metrics.ssim, 6) << "\n";
  }
  if (!a.out.empty()) {
    const fs::path out(a.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_text(out, csv.str());
  }
  std::cout << csv.str();
  return kOk;
}

// ---- upscale ----

struct UpscaleArgs {
  std::string ckpt;
  std::string in;
  double scale = 2.0;
  std::string out;
};

int cmd_upscale(const UpscaleArgs& a) {
  check_scales({a.scale});
  if (!fs::exists(a.ckpt)) throw UsageError("checkpoint not found: " + a.ckpt);
  const s3::S3Model model = s3::load_model(a.ckpt);
  const s3::Image lr = s3::load_image(a.in);
  const auto oh = static_cast<std::size_t>(std::floor(static_cast<double>(lr.height) * a.scale));
  const auto ow = static_cast<std::size_t>(std::floor(static_cast<double>(lr.width) * a.scale));
  if (oh == 0 || ow == 0) throw UsageError("output would be empty at scale " + std::to_string(a.scale));
  const s3::Image hr = s3::upscale(model, lr, oh, ow, a.scale);
  s3::save_image(a.out, hr);
  std::cout << lr.width << "x" << lr.height << " -> " << ow << "x" << oh << "\n";
  return kOk;
}

// ---- verify ----

int cmd_verify(double perturbation) {
  s3::verify::VerifyOptions opt;
  opt.zoh_perturbation = perturbation;
  std::vector<std::string> failed;
  double total = 0.0;
  s3::verify::run_all(opt, [&](const s3::verify::CheckResult& r) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << fmt(r.seconds, 2) << " s): " << r.detail
              << std::endl;
    total += r.seconds;
    if (!r.passed) failed.push_back(r.name);
  });
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    std::cout << "verify: FAILED: " << names << "\n";
    return kCheckFailed;
  }
  std::cout << "verify: all checks passed in " << fmt(total, 2) << " s\n";
  return kOk;
}

// ---- bench-scan ----

int cmd_bench_scan(const s3::verify::ScanBenchOptions& opt) {
  const auto rep = s3::verify::run_scan_bench(opt);
  std::cout << "impl,length,median_ms\n";
  for (const auto& r : rep.rows) std::cout << r.impl << "," << r.length << "," << fmt(r.median_ms, 4) << "\n";
  std::cerr << "max |sequential - parallel| = " << rep.max_abs_diff << ", worst time(4L)/time(L) = "
            << fmt(rep.worst_ratio, 3) << "\n";
  if (!rep.ratio_ok || !rep.agree_ok) {
    std::cerr << "bench-scan: FAILED: " << rep.failure << "\n";
    return kCheckFailed;
  }
  return kOk;
}

// ---- ablate ----

struct AblateArgs {
  std::string config;
  std::string grid = "decoder";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> scales = {3.0};
  std::string out;
};

int cmd_ablate(const AblateArgs& a) {
  check_scales(a.scales);
  s3::RunConfig cfg = s3::verify::ablation_profile();
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw UsageError("config file not found: " + a.config);
    cfg = s3::load_run_config(a.config);
  }
  std::vector<s3::AblationVariant> variants;
  if (a.grid == "decoder") {
    variants = s3::verify::decoder_variants(cfg.model);
  } else if (a.grid == "modules") {
    variants = s3::verify::module_variants(cfg.model);
  } else {
    throw UsageError("--grid must be decoder or modules, got " + a.grid);
  }
  const s3::Corpus corpus = s3::load_corpus(cfg.data);
  if (corpus.val.empty()) throw UsageError("ablation needs a validation split");

  std::ostringstream csv;
  csv << "variant,seed,parameters,scale,psnr_rgb\n";
  const auto results = s3::run_ablation(cfg, variants, a.seeds, corpus, a.scales, [&](const s3::AblationResult& r) {
    for (const auto& [s, p] : r.psnr) {
      csv << r.variant << "," << r.seed << "," << r.parameters << "," << s << "," << fmt(p, 6) << "\n";
      std::cerr << r.variant << " seed " << r.seed << " x" << s << " " << fmt(p) << " dB\n";
    }
  });
  for (double s : a.scales)
    for (const auto& [name, m] : s3::verify::median_by_variant(results, s))
      std::cout << "median x" << s << " " << name << " " << fmt(m) << " dB\n";
  if (!a.out.empty()) write_text(a.out, csv.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S3Mamba arbitrary-scale super-resolution"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write a procedural corpus and its manifest");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--n", gen.n, "Number of training images");
  c_gen->add_option("--val", gen.val, "Number of validation images");
  c_gen->add_option("--size", gen.size, "Image side length in pixels");
  c_gen->add_option("--seed", gen.seed, "Generator seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model from a JSON config");
  c_train->add_option("--config", tr.config, "Run config (JSON)")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  c_train->add_flag("--f32", tr.f32, "Store checkpoint tensors as float32 (not bit-exact)");
  c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score a checkpoint and the bicubic baseline");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  c_eval->add_option("--corpus", ev.corpus, "Directory of HR images (uses val/ or test/ if present)")->required();
  c_eval->add_option("--scales", ev.scales, "Comma-separated scale factors")->delimiter(',');
  c_eval->add_option("--out", ev.out, "CSV output path");
  c_eval->add_option("--shave", ev.shave, "Border pixels ignored by metrics (-1: ceil(scale))");

  UpscaleArgs up;
  auto* c_up = app.add_subcommand("upscale", "Upscale one image by an arbitrary factor");
  c_up->add_option("--ckpt", up.ckpt, "Checkpoint file")->required();
  c_up->add_option("--in", up.in, "Input PNG or PPM")->required();
  c_up->add_option("--scale", up.scale, "Scale factor (> 0, non-integer allowed)");
  c_up->add_option("--out", up.out, "Output PNG or PPM")->required();

  double perturbation = 0.0;
  auto* c_verify = app.add_subcommand("verify", "Run the oracle checks; exit 0 iff all pass");
  c_verify->add_option("--inject-zoh-perturbation", perturbation)->group("")->expected(0, 1)->default_str("0.001");

  s3::verify::ScanBenchOptions bench;
  auto* c_bench = app.add_subcommand("bench-scan", "Time the sequential and blocked scans");
  c_bench->add_option("--lengths", bench.lengths, "Comma-separated ascending sequence lengths")->delimiter(',');
  c_bench->add_option("--repeat", bench.repeat, "Timed runs per length (median reported)");
  c_bench->add_option("--d-inner", bench.d_inner, "Inner channels");
  c_bench->add_option("--state", bench.n_state, "State size N");
  c_bench->add_option("--block", bench.block, "Block length of the blocked scan");
  c_bench->add_option("--threads", bench.threads, "Worker threads of the blocked scan (0: hardware)");
  c_bench->add_option("--max-ratio", bench.ratio_limit, "Bound on time(4L)/time(L)");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Train a variant grid over several seeds");
  c_ab->add_option("--config", ab.config, "Base run config (default: built-in ablation profile)");
  c_ab->add_option("--grid", ab.grid, "decoder (mlp/ssm/sssm) or modules (neither/sfatt/gfe/both)");
  c_ab->add_option("--seeds", ab.seeds, "Comma-separated seeds")->delimiter(',');
  c_ab->add_option("--scales", ab.scales, "Comma-separated evaluation scales")->delimiter(',');
  c_ab->add_option("--out", ab.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_up->parsed()) return cmd_upscale(up);
    if (c_verify->parsed()) {
      // A bare flag means the default 1e-3 perturbation.
      const auto* opt = c_verify->get_option("--inject-zoh-perturbation");
      if (opt->count() > 0 && opt->results().empty()) perturbation = 1e-3;
      return cmd_verify(perturbation);
    }
    if (c_bench->parsed()) return cmd_bench_scan(bench);
    if (c_ab->parsed()) return cmd_ablate(ab);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const s3::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const s3::ImageIoError& e) {
    std::cerr << "image error: " << e.what() << "\n";
    return kUsage;
  } catch (const s3::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
