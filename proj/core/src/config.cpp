#include "s3mamba/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace s3 {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (decay_epochs < 1) throw ConfigError("train.decay_epochs must be >= 1");
  if (!(decay_factor > 0.0)) throw ConfigError("train.decay_factor must be > 0");
}

void EvalConfig::validate() const {
  for (double s : scales)
    if (!(s > 0.0)) throw ConfigError("eval.scales entries must be > 0");
  if (shave < -1) throw ConfigError("eval.shave must be >= 0 or -1");
}

void RunConfig::validate() const {
  try {
    data.validate();
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  eval.validate();
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_epochs));
}

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() || v.get<long long>() >= 0) {
            out = v.get<T>();
          } else {
            throw ConfigError(where(key) + " must be non-negative");
          }
        } else {
          out = v.get<T>();
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
        out = v.get<std::string>();
      } else {
        if (!v.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
        out.clear();
        for (const auto& e : v) {
          if (!e.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
          out.push_back(e.get<double>());
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k.c_str()));
    }
  }

 private:
  std::string where(const char* key) const { return "'" + path_ + "." + key + "'"; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  json j;
  j["data"] = {{"source", c.data.source},           {"lr_patch", c.data.lr_patch},
               {"scale_min", c.data.scale_min},     {"scale_max", c.data.scale_max},
               {"queries", c.data.queries},         {"seed", c.data.seed},
               {"train_images", c.data.train_images}, {"val_images", c.data.val_images},
               {"image_size", c.data.image_size}};
  j["model"] = {{"d_model", c.model.d_model},
                {"n_resblocks", c.model.n_resblocks},
                {"n_blocks", c.model.n_blocks},
                {"n_state", c.model.n_state},
                {"dt_rank", c.model.dt_rank},
                {"sigma_hidden", c.model.sigma_hidden},
                {"decoder_width", c.model.decoder_width},
                {"decoder", to_string(c.model.decoder)},
                {"use_gfe", c.model.use_gfe},
                {"use_sfatt", c.model.use_sfatt},
                {"residual_bicubic", c.model.residual_bicubic}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"decay_epochs", c.train.decay_epochs},
                {"decay_factor", c.train.decay_factor},
                {"seed", c.train.seed},
                {"samples_per_epoch", c.train.samples_per_epoch},
                {"save_every", c.train.save_every},
                {"val_every", c.train.val_every},
                {"val_images", c.train.val_images}};
  j["eval"] = {{"scales", c.eval.scales}, {"shave", c.eval.shave}};
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  RunConfig c;
  const json empty = json::object();

  static const std::set<std::string> sections = {"data", "model", "train", "eval"};
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : root.items()) {
    if (!sections.count(k)) throw ConfigError("unknown key 'config." + k + "'");
  }
  const json& jd = root.contains("data") ? root.at("data") : empty;
  const json& jm = root.contains("model") ? root.at("model") : empty;
  const json& jt = root.contains("train") ? root.at("train") : empty;
  const json& je = root.contains("eval") ? root.at("eval") : empty;

  Section d(jd, "data");
  d.get("source", c.data.source);
  d.get("lr_patch", c.data.lr_patch);
  d.get("scale_min", c.data.scale_min);
  d.get("scale_max", c.data.scale_max);
  d.get("queries", c.data.queries);
  d.get("seed", c.data.seed);
  d.get("train_images", c.data.train_images);
  d.get("val_images", c.data.val_images);
  d.get("image_size", c.data.image_size);
  d.finish();

  Section m(jm, "model");
  m.get("d_model", c.model.d_model);
  m.get("n_resblocks", c.model.n_resblocks);
  m.get("n_blocks", c.model.n_blocks);
  m.get("n_state", c.model.n_state);
  m.get("dt_rank", c.model.dt_rank);
  m.get("sigma_hidden", c.model.sigma_hidden);
  m.get("decoder_width", c.model.decoder_width);
  std::string decoder = to_string(c.model.decoder);
  m.get("decoder", decoder);
  try {
    c.model.decoder = parse_mixer_kind(decoder);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("'model.decoder': ") + e.what());
  }
  m.get("use_gfe", c.model.use_gfe);
  m.get("use_sfatt", c.model.use_sfatt);
  m.get("residual_bicubic", c.model.residual_bicubic);
  m.finish();

  Section t(jt, "train");
  t.get("epochs", c.train.epochs);
  t.get("batch_size", c.train.batch_size);
  t.get("lr", c.train.lr);
  t.get("decay_epochs", c.train.decay_epochs);
  t.get("decay_factor", c.train.decay_factor);
  t.get("seed", c.train.seed);
  t.get("samples_per_epoch", c.train.samples_per_epoch);
  t.get("save_every", c.train.save_every);
  t.get("val_every", c.train.val_every);
  t.get("val_images", c.train.val_images);
  t.finish();

  Section e(je, "eval");
  e.get("scales", c.eval.scales);
  e.get("shave", c.eval.shave);
  e.finish();

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace s3
