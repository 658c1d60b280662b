#include "experiments.hpp"

#include <algorithm>
#include <map>

namespace s3::verify {

RunConfig toy_profile() {
  RunConfig cfg;
  cfg.data.source = "procedural";
  cfg.data.train_images = 32;
  cfg.data.val_images = 8;
  cfg.data.image_size = 96;
  cfg.data.lr_patch = 24;
  cfg.data.queries = 64;
  cfg.data.scale_min = 1.0;
  cfg.data.scale_max = 4.0;
  cfg.model.residual_bicubic = true;
  cfg.train.epochs = 100;
  cfg.train.decay_epochs = 20;
  cfg.train.val_every = 0;
  return cfg;
}

RunConfig ablation_profile() {
  RunConfig cfg = toy_profile();
  cfg.data.scale_max = 2.5;
  cfg.train.epochs = 50;
  cfg.train.decay_epochs = 10;
  return cfg;
}

std::vector<AblationVariant> decoder_variants(const ModelConfig& base) {
  std::vector<AblationVariant> out;
  for (const MixerKind k : {MixerKind::mlp, MixerKind::ssm, MixerKind::sssm}) {
    ModelConfig m = base;
    m.decoder = k;
    out.push_back({to_string(k), m});
  }
  return out;
}

std::vector<AblationVariant> module_variants(const ModelConfig& base) {
  std::vector<AblationVariant> out;
  const std::pair<const char*, std::pair<bool, bool>> grid[] = {
      {"neither", {false, false}}, {"sfatt", {false, true}}, {"gfe", {true, false}}, {"both", {true, true}}};
  for (const auto& [name, flags] : grid) {
    ModelConfig m = base;
    m.decoder = MixerKind::sssm;
    m.use_gfe = flags.first;
    m.use_sfatt = flags.second;
    out.push_back({name, m});
  }
  return out;
}

std::vector<std::pair<std::string, double>> median_by_variant(const std::vector<AblationResult>& results,
                                                              double scale) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : results) {
    if (!values.count(r.variant)) order.push_back(r.variant);
    auto& v = values[r.variant];
    for (const auto& [s, p] : r.psnr)
      if (s == scale) v.push_back(p);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& name : order) out.emplace_back(name, median(values[name]));
  return out;
}

}  // namespace s3::verify
