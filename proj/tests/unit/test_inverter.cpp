#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "sfe/errors.hpp"
#include "sfe/inverter.hpp"

using namespace sfe;
using namespace sfe::inverter;

TEST(InverterConfig, StridePlans) {
  InverterConfig c;
  c.k = 5;
  EXPECT_EQ(c.stage_strides(64), (std::vector<int>{2, 2, 1, 2}));
  EXPECT_EQ(c.stage_resolutions(64), (std::vector<int>{32, 16, 16, 8}));
  c.k = 3;
  EXPECT_EQ(c.stage_resolutions(32), (std::vector<int>{16, 8, 8, 4}));
  c.k = 7;
  EXPECT_EQ(c.stage_resolutions(64), (std::vector<int>{32, 32, 32, 16}));
  EXPECT_EQ(c.depth_to_tap(), 13);
}

TEST(InverterConfig, Validation) {
  const auto g = tsupport::tiny_generator();
  InverterConfig c;
  c.k = g.num_layers();
  EXPECT_THROW(c.validate(g), InvalidInput);
  c.k = 3;
  c.feature_tap_stage = 5;
  EXPECT_THROW(c.validate(g), InvalidInput);
  c.feature_tap_stage = 3;
  c.stage_blocks = {1, 1};
  EXPECT_THROW(c.validate(g), InvalidInput);
}

namespace {

InverterConfig small(int k, bool no_fuser = false) {
  InverterConfig c;
  c.k = k;
  c.backbone_stage_channels = {8, 8, 8, 8};
  c.stage_blocks = {1, 1, 1, 1};
  c.fuser_blocks = 1;
  c.predictor_blocks = 1;
  c.no_fuser = no_fuser;
  return c;
}

}  // namespace

TEST(Inverter, OutputShapes) {
  torch::NoGradGuard ng;
  const auto gc = tsupport::tiny_generator();
  stylegen::Generator g(gc);
  Inverter inv(small(5), gc, torch::zeros({gc.style_dim}));
  const auto r = inv->invert(g, torch::randn({2, 3, 32, 32}));
  EXPECT_EQ(r.w.rows.sizes(), torch::IntArrayRef({2, gc.num_layers(), gc.style_dim}));
  EXPECT_EQ(r.f_k.values.sizes(), torch::IntArrayRef({2, gc.feature_channels(5), 16, 16}));
  EXPECT_EQ(r.f_k.layer_index, 5);
  EXPECT_TRUE(torch::equal(r.f_w.values, g->synthesize_partial(r.w, 5).values));
}

TEST(Inverter, InitialStylesStartAtTheMean) {
  torch::NoGradGuard ng;
  const auto gc = tsupport::tiny_generator();
  auto mean = torch::randn({gc.style_dim});
  Inverter inv(small(3), gc, mean);
  const auto w = inv->predict_wplus(inv->backbone_features(torch::randn({3, 3, 32, 32})));
  // small head init: styles close to the tiled mean
  EXPECT_LT((w.rows - mean.view({1, 1, -1})).abs().mean().item<double>(), 0.5 * mean.abs().mean().item<double>());
}

TEST(Inverter, FreshFuserAveragesItsInputs) {
  torch::NoGradGuard ng;
  const auto gc = tsupport::tiny_generator();
  Inverter inv(small(3), gc, torch::zeros({gc.style_dim}));
  const int c = gc.feature_channels(3);
  stylegen::FeatureTensor a{torch::randn({1, c, 8, 8}), 3}, b{torch::randn({1, c, 8, 8}), 3};
  const auto f = inv->fuse(a, b);
  const auto mid = 0.5 * (a.values + b.values);
  // residual branches start at 0.1 scale, so the passthrough dominates
  EXPECT_LT((f.values - mid).abs().mean().item<double>(), 0.5 * mid.abs().mean().item<double>());
}

TEST(Inverter, NoFuserReturnsThePrediction) {
  torch::NoGradGuard ng;
  const auto gc = tsupport::tiny_generator();
  stylegen::Generator g(gc);
  Inverter inv(small(3, true), gc, torch::zeros({gc.style_dim}));
  const auto r = inv->invert(g, torch::randn({1, 3, 32, 32}));
  EXPECT_TRUE(torch::equal(r.f_k.values, r.f_pred.values));
}

TEST(Inverter, RejectsWrongImageSize) {
  const auto gc = tsupport::tiny_generator();
  stylegen::Generator g(gc);
  Inverter inv(small(3), gc, torch::zeros({gc.style_dim}));
  EXPECT_THROW(inv->invert(g, torch::randn({1, 3, 64, 64})), InvalidInput);
}
