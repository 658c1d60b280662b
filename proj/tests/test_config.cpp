#include <gtest/gtest.h>

#include <cmath>

#include "s3mamba/config.hpp"

namespace s3 {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.train.epochs, 100u);
  EXPECT_EQ(c.train.batch_size, 8u);
  EXPECT_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.decay_epochs, 20u);
  EXPECT_EQ(c.train.decay_factor, 0.5);
  EXPECT_EQ(c.data.lr_patch, 24u);
  EXPECT_EQ(c.data.queries, 64u);
  EXPECT_EQ(c.model.d_model, 32u);
  EXPECT_EQ(c.model.n_blocks, 2u);
  EXPECT_EQ(c.model.n_state, 8u);
  EXPECT_EQ(c.model.decoder, MixerKind::sssm);
  EXPECT_EQ(c.eval.scales, (std::vector<double>{2.0, 3.0, 3.5, 4.0, 6.0}));
}

TEST(Config, UnknownKeysNamePath) {
  EXPECT_NE(error_of(R"({"train": {"epoch": 3}})").find("train.epoch"), std::string::npos);
  EXPECT_NE(error_of(R"({"trian": {}})").find("trian"), std::string::npos);
}

TEST(Config, TypeMismatchNamesPath) {
  EXPECT_NE(error_of(R"({"model": {"d_model": "big"}})").find("model.d_model"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"use_gfe": 1}})").find("model.use_gfe"), std::string::npos);
  EXPECT_NE(error_of(R"({"train": {"epochs": -1}})").find("train.epochs"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"decoder": "rnn"}})").find("model.decoder"), std::string::npos);
  EXPECT_NE(error_of("[1, 2]"), "");
  EXPECT_NE(error_of("{not json"), "");
}

TEST(Config, SemanticValidation) {
  EXPECT_NE(error_of(R"({"data": {"scale_min": 3.0, "scale_max": 2.0}})"), "");
  EXPECT_NE(error_of(R"({"train": {"lr": 0}})"), "");
  EXPECT_NE(error_of(R"({"eval": {"scales": [2, -1]}})"), "");
}

TEST(Config, DumpParseRoundTrip) {
  RunConfig c = parse_run_config(R"({"model": {"decoder": "mlp", "use_sfatt": false}, "train": {"lr": 0.00025}})");
  EXPECT_EQ(c.model.decoder, MixerKind::mlp);
  EXPECT_FALSE(c.model.use_sfatt);
  const std::string once = dump_run_config(c);
  const std::string twice = dump_run_config(parse_run_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(parse_run_config(once).train.lr, 0.00025);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_run_config("/nonexistent/run.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.json"), std::string::npos);
  }
}

TEST(Config, StepDecaySchedule) {
  TrainConfig t;
  EXPECT_EQ(lr_at(t, 0), 1e-4);
  EXPECT_EQ(lr_at(t, 19), 1e-4);
  EXPECT_EQ(lr_at(t, 20), 5e-5);
  EXPECT_EQ(lr_at(t, 99), 1e-4 * std::pow(0.5, 4));
}

}  // namespace
}  // namespace s3
