#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s3mamba/autodiff.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/sssm_block.hpp"

namespace s3 {
namespace {

Tensor random_map(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor t = Tensor::zeros({c, h, w});
  for (double& v : t.mutable_values()) v = rng.uniform(-1, 1);
  return t;
}

TEST(ScanOrder, FourDirectionsOn2x3) {
  EXPECT_EQ(scan_order(2, 3, 0), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(scan_order(2, 3, 1), (std::vector<std::size_t>{5, 4, 3, 2, 1, 0}));
  EXPECT_EQ(scan_order(2, 3, 2), (std::vector<std::size_t>{0, 3, 1, 4, 2, 5}));
  EXPECT_EQ(scan_order(2, 3, 3), (std::vector<std::size_t>{5, 2, 4, 1, 3, 0}));
}

TEST(ScanOrder, EveryDirectionIsAPermutation) {
  for (int d = 0; d < kScanDirections; ++d) {
    auto o = scan_order(5, 7, d);
    std::sort(o.begin(), o.end());
    std::vector<std::size_t> want(35);
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(o, want) << d;
  }
}

TEST(FeatureMap, CellCenters) {
  const Tensor c = FeatureMap::cell_centers(2, 4);
  ASSERT_EQ(c.shape(), (Shape{8, 2}));
  // row 1, column 2: (-1 + 3/2, -1 + 5/4)
  EXPECT_DOUBLE_EQ(c.values()[(1 * 4 + 2) * 2 + 0], 0.5);
  EXPECT_DOUBLE_EQ(c.values()[(1 * 4 + 2) * 2 + 1], 0.25);
}

TEST(FeatureMap, FlattenUnflattenRoundTrip) {
  const Tensor m = random_map(3, 4, 5, 1);
  for (int d = 0; d < kScanDirections; ++d) {
    const FlatSequence f = scan_flatten(FeatureMap{m}, d);
    ASSERT_EQ(f.seq.shape(), (Shape{20, 3}));
    const FeatureMap back = scan_unflatten(f.seq, 4, 5, d);
    for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(back.values.values()[i], m.values()[i]);
    // Coordinates travel with their tokens.
    const auto order = scan_order(4, 5, d);
    const Tensor centers = FeatureMap::cell_centers(4, 5);
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_EQ(f.coords.values()[2 * i], centers.values()[2 * order[i]]);
      EXPECT_EQ(f.coords.values()[2 * i + 1], centers.values()[2 * order[i] + 1]);
    }
  }
}

TEST(FeatureMap, TokensRoundTrip) {
  const Tensor m = random_map(2, 3, 4, 2);
  const Tensor t = map_to_tokens(m);
  ASSERT_EQ(t.shape(), (Shape{12, 2}));
  EXPECT_EQ(t.values()[(1 * 4 + 2) * 2 + 1], m.values()[(1 * 3 + 1) * 4 + 2]);
  const Tensor back = tokens_to_map(t, 3, 4);
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(back.values()[i], m.values()[i]);
}

TEST(MixerKind, ParseAndPrint) {
  for (const auto k : {MixerKind::mlp, MixerKind::ssm, MixerKind::sssm}) EXPECT_EQ(parse_mixer_kind(to_string(k)), k);
  EXPECT_THROW(parse_mixer_kind("transformer"), std::invalid_argument);
}

class BlockKinds : public ::testing::TestWithParam<MixerKind> {};

TEST_P(BlockKinds, FreshBlockIsIdentity) {
  BlockConfig cfg;
  cfg.d_model = 6;
  cfg.n_state = 3;
  cfg.kind = GetParam();
  SplitMix64 rng(3);
  const SssmBlock block = SssmBlock::create(cfg, rng);
  const Tensor m = random_map(6, 4, 3, 4);
  const FeatureMap out = block(FeatureMap{m}, 2.5);
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(out.values.values()[i], m.values()[i]);
}

TEST_P(BlockKinds, PerturbedBlockKeepsShapeAndChangesOutput) {
  BlockConfig cfg;
  cfg.d_model = 4;
  cfg.n_state = 2;
  cfg.kind = GetParam();
  SplitMix64 rng(5);
  SssmBlock block = SssmBlock::create(cfg, rng);
  for (double& v : block.proj_out.weight.mutable_values()) v = rng.uniform(-0.5, 0.5);
  const Tensor m = random_map(4, 3, 5, 6);
  const FeatureMap out = block(FeatureMap{m}, 2.0);
  ASSERT_EQ(out.values.shape(), m.shape());
  double diff = 0;
  for (std::size_t i = 0; i < m.numel(); ++i) diff += std::fabs(out.values.values()[i] - m.values()[i]);
  EXPECT_GT(diff, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(All, BlockKinds, ::testing::Values(MixerKind::mlp, MixerKind::ssm, MixerKind::sssm),
                         [](const auto& info) { return to_string(info.param); });

TEST(SssmBlock, ScaleChangesOutputOnlyWithModulation) {
  auto run = [](MixerKind kind, double scale) {
    BlockConfig cfg;
    cfg.d_model = 4;
    cfg.n_state = 2;
    cfg.kind = kind;
    SplitMix64 rng(7);
    SssmBlock block = SssmBlock::create(cfg, rng);
    for (double& v : block.proj_out.weight.mutable_values()) v = rng.uniform(-0.5, 0.5);
    NamedTensors ps;
    block.mixer.collect("", ps);
    for (auto& [name, t] : ps) {
      Tensor tt = t;
      for (double& v : tt.mutable_values()) v += rng.uniform(-0.2, 0.2);
    }
    return block(FeatureMap{random_map(4, 3, 3, 8)}, scale).values;
  };
  const Tensor s2 = run(MixerKind::sssm, 2.0), s4 = run(MixerKind::sssm, 4.0);
  const Tensor p2 = run(MixerKind::ssm, 2.0), p4 = run(MixerKind::ssm, 4.0);
  double ds = 0, dp = 0;
  for (std::size_t i = 0; i < s2.numel(); ++i) {
    ds += std::fabs(s2.values()[i] - s4.values()[i]);
    dp += std::fabs(p2.values()[i] - p4.values()[i]);
  }
  EXPECT_GT(ds, 1e-8);
  EXPECT_EQ(dp, 0.0);
}

}  // namespace
}  // namespace s3
