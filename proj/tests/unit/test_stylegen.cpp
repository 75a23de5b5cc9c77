#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "sfe/errors.hpp"
#include "sfe/stylegen.hpp"

using namespace sfe;
using namespace sfe::stylegen;

TEST(Generator, LayerGeometry) {
  GeneratorConfig c;
  c.image_resolution = 64;
  EXPECT_EQ(c.num_layers(), 10);
  c.image_resolution = 32;
  EXPECT_EQ(c.num_layers(), 8);
  EXPECT_EQ(GeneratorConfig::layer_resolution(0), 4);
  EXPECT_EQ(GeneratorConfig::layer_resolution(3), 8);
  EXPECT_EQ(GeneratorConfig::layer_resolution(5), 16);
  EXPECT_EQ(GeneratorConfig::layer_resolution(9), 64);
  c.image_resolution = 48;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Generator, SpliceReproducesFullSynthesis) {
  torch::NoGradGuard ng;
  Generator g(tsupport::tiny_generator(4));
  g->eval();
  auto w = WPlusLatent::broadcast(g->map_latent(torch::randn({4, 16})), g->num_layers());
  w.rows = w.rows + 0.3 * torch::randn_like(w.rows);  // distinct rows
  const auto full = g->synthesize(w);
  EXPECT_EQ(full.sizes(), torch::IntArrayRef({4, 3, 32, 32}));
  for (int k = 0; k < g->num_layers(); ++k) {
    const auto f = g->synthesize_partial(w, k);
    EXPECT_EQ(f.values.size(1), g->config().feature_channels(k));
    EXPECT_EQ(f.values.size(2), GeneratorConfig::layer_resolution(k));
    const auto resumed = g->synthesize_from(f, w.tail(k));
    EXPECT_LE((resumed - full).abs().max().item<double>(), 1e-5) << "k=" << k;
  }
}

TEST(Generator, FeatureTensorSplitsActivationsAndSkip) {
  torch::NoGradGuard ng;
  Generator g(tsupport::tiny_generator());
  auto w = WPlusLatent::broadcast(g->map_latent(torch::randn({2, 16})), g->num_layers());
  const auto f = g->synthesize_partial(w, 3);
  EXPECT_EQ(f.activations().size(1), g->config().conv_channels(3));
  EXPECT_EQ(f.rgb_skip().size(1), 3);
}

TEST(Generator, RejectsWrongLatentShapes) {
  Generator g(tsupport::tiny_generator());
  WPlusLatent bad{torch::zeros({1, 3, 16})};
  EXPECT_THROW(g->synthesize(bad), InvalidInput);
  auto w = WPlusLatent::broadcast(torch::zeros({1, 16}), g->num_layers());
  const auto f = g->synthesize_partial(w, 2);
  EXPECT_THROW(g->synthesize_from(f, w.tail(3)), InvalidInput);
}

TEST(Generator, SameSeedSameWeights) {
  Generator a(tsupport::tiny_generator(3)), b(tsupport::tiny_generator(3)), c(tsupport::tiny_generator(4));
  EXPECT_EQ(parameter_checksum(*a), parameter_checksum(*b));
  EXPECT_NE(parameter_checksum(*a), parameter_checksum(*c));
}

TEST(Generator, ChecksumSeesAnyParameterChange) {
  Generator g(tsupport::tiny_generator());
  const auto before = parameter_checksum(*g);
  {
    torch::NoGradGuard ng;
    auto p = g->parameters().back();
    p.view(-1)[0].add_(1e-6);
  }
  EXPECT_NE(before, parameter_checksum(*g));
}

TEST(Discriminator, ScoresOnePerImage) {
  DiscriminatorConfig c;
  c.image_resolution = 32;
  c.channel_base = 128;
  c.channel_max = 16;
  Discriminator d(c);
  EXPECT_EQ(d->forward(torch::randn({3, 3, 32, 32})).sizes(), torch::IntArrayRef({3}));
}
