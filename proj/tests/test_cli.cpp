#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "s3mamba/image.hpp"
#include "test_util.hpp"

namespace s3 {
namespace {

namespace fs = std::filesystem;
using testing::read_bytes;
using testing::scratch_dir;

struct CliResult {
  int code;
  std::string out;
};

// Runs the CLI with stdout and stderr captured together.
CliResult cli(const std::string& args) {
  const std::string cmd = std::string(S3_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

TEST(Cli, HelpListsFlagsWithDefaults) {
  const CliResult r = cli("gen-data --help");
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"--out", "--n", "--size", "--seed", "[96]", "[32]"}) EXPECT_NE(r.out.find(s), std::string::npos) << s;
  const CliResult b = cli("bench-scan --help");
  EXPECT_NE(b.out.find("[[1024,2048,4096]]"), std::string::npos);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
}

TEST(Cli, GenDataDeterministicAndEmpty) {
  const auto dir = scratch_dir("cli_gen");
  ASSERT_EQ(cli("gen-data --out " + (dir / "a").string() + " --n 3 --val 1 --size 24 --seed 5").code, 0);
  ASSERT_EQ(cli("gen-data --out " + (dir / "b").string() + " --n 3 --val 1 --size 24 --seed 5").code, 0);
  for (const char* f : {"manifest.json", "train/0000.png", "train/0002.png", "val/0000.png"})
    EXPECT_EQ(read_bytes(dir / "a" / f), read_bytes(dir / "b" / f)) << f;
  const auto m = nlohmann::json::parse(read_bytes(dir / "a" / "manifest.json"));
  EXPECT_EQ(m["images"].size(), 4u);
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["images"][0]["kind"], "sinusoid");
  EXPECT_EQ(load_image(dir / "a" / "train/0001.png").width, 24u);

  ASSERT_EQ(cli("gen-data --out " + (dir / "empty").string() + " --n 0").code, 0);
  const auto e = nlohmann::json::parse(read_bytes(dir / "empty" / "manifest.json"));
  EXPECT_TRUE(e["images"].empty());
}

TEST(Cli, TrainErrorsAndExitCodes) {
  const auto dir = scratch_dir("cli_train_err");
  const CliResult missing = cli("train --config /nonexistent/cfg.json --out " + dir.string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("/nonexistent/cfg.json"), std::string::npos);
  std::ofstream(dir / "bad.json") << R"({"train": {"epoch": 1}})";
  const CliResult bad = cli("train --config " + (dir / "bad.json").string() + " --out " + dir.string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("train.epoch"), std::string::npos);
}

// Shared fixture: one tiny training run reused by eval and upscale.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch_dir("cli_run");
    ASSERT_EQ(cli("gen-data --out " + (dir_ / "corpus").string() + " --n 4 --val 2 --size 32 --seed 1").code, 0);
    RunConfig cfg = testing::tiny_run();
    cfg.data.source = (dir_ / "corpus").string();
    cfg.train.epochs = 1;
    std::ofstream(dir_ / "cfg.json") << dump_run_config(cfg);
    const CliResult r = cli("train --quiet --config " + (dir_ / "cfg.json").string() + " --out " + (dir_ / "run").string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static fs::path dir_;
};
fs::path CliRun::dir_;

TEST_F(CliRun, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(dir_ / "run" / "ckpt_0001.s3mb"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "config.effective.json"));
  const std::string log = read_bytes(dir_ / "run" / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,loss,psnr_x2,psnr_x3,lr");
  const RunConfig eff = load_run_config(dir_ / "run" / "config.effective.json");
  EXPECT_EQ(eff.train.epochs, 1u);
}

TEST_F(CliRun, EvalCsvLayout) {
  const fs::path csv = dir_ / "eval.csv";
  const CliResult r = cli("eval --ckpt " + (dir_ / "run" / "ckpt_0001.s3mb").string() + " --corpus " +
                    (dir_ / "corpus").string() + " --scales 2,3.5 --out " + csv.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scale,method,psnr_rgb,psnr_y,ssim");
  std::size_t rows = 0, bicubic = 0;
  while (std::getline(in, line)) {
    ++rows;
    bicubic += line.find(",bicubic,") != std::string::npos;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_EQ(bicubic, 2u);
  EXPECT_EQ(cli("eval --ckpt " + (dir_ / "run" / "ckpt_0001.s3mb").string() + " --corpus " +
                (dir_ / "corpus").string() + " --scales 2,0")
                .code,
            2);
}

TEST_F(CliRun, UpscaleSizeAndDeterminism) {
  Image in(3, 10, 8, 0.3);
  for (std::size_t i = 0; i < in.data.size(); ++i) in.data[i] = static_cast<double>(i % 17) / 16.0;
  save_image(dir_ / "in.png", in);
  const std::string base = "upscale --ckpt " + (dir_ / "run" / "ckpt_0001.s3mb").string() + " --in " +
                           (dir_ / "in.png").string();
  ASSERT_EQ(cli(base + " --scale 2.5 --out " + (dir_ / "o1.png").string()).code, 0);
  ASSERT_EQ(cli(base + " --scale 2.5 --out " + (dir_ / "o2.png").string()).code, 0);
  const Image o = load_image(dir_ / "o1.png");
  EXPECT_EQ(o.height, 25u);
  EXPECT_EQ(o.width, 20u);
  EXPECT_EQ(read_bytes(dir_ / "o1.png"), read_bytes(dir_ / "o2.png"));
  ASSERT_EQ(cli(base + " --scale 1 --out " + (dir_ / "o3.png").string()).code, 0);
  EXPECT_EQ(load_image(dir_ / "o3.png").height, 10u);
  EXPECT_EQ(cli(base + " --scale -2 --out " + (dir_ / "o4.png").string()).code, 2);
  EXPECT_EQ(cli("upscale --ckpt " + (dir_ / "run" / "ckpt_0001.s3mb").string() + " --in /nonexistent.png --out " +
                (dir_ / "o5.png").string())
                .code,
            2);
}

TEST_F(CliRun, ResumeMatchesUninterrupted) {
  RunConfig cfg = load_run_config(dir_ / "cfg.json");
  cfg.train.epochs = 2;
  std::ofstream(dir_ / "cfg2.json") << dump_run_config(cfg);
  const std::string c2 = " --quiet --config " + (dir_ / "cfg2.json").string();
  ASSERT_EQ(cli("train" + c2 + " --out " + (dir_ / "full").string()).code, 0);
  ASSERT_EQ(cli("train" + c2 + " --out " + (dir_ / "resumed").string() + " --resume " +
                (dir_ / "run" / "ckpt_0001.s3mb").string())
                .code,
            0);
  EXPECT_EQ(read_bytes(dir_ / "full" / "ckpt_0002.s3mb"), read_bytes(dir_ / "resumed" / "ckpt_0002.s3mb"));
}

TEST(Cli, VerifyHookFailsZohCheck) {
  const CliResult r = cli("verify --inject-zoh-perturbation");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL zoh-oracle"), std::string::npos);
  EXPECT_NE(r.out.find("verify: FAILED: zoh-oracle"), std::string::npos);
}

TEST(Cli, BenchScanCsv) {
  const CliResult r = cli("bench-scan --lengths 64,256 --repeat 3 2>/dev/null");
  EXPECT_NE(r.out.find("impl,length,median_ms"), std::string::npos);
  EXPECT_NE(r.out.find("sequential,256,"), std::string::npos);
  EXPECT_NE(r.out.find("parallel,64,"), std::string::npos);
  EXPECT_EQ(cli("bench-scan --lengths 256,64").code, 2);
}

}  // namespace
}  // namespace s3
