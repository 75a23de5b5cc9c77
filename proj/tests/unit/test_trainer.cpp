// Tiny end-to-end runs: every loop for a handful of steps.

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "sfe/commands.hpp"
#include "sfe/errors.hpp"
#include "sfe/trainer.hpp"

using namespace sfe;

namespace {

directions::DirectionRegistry hand_registry(int style_dim) {
  directions::DirectionRegistry r;
  int i = 0;
  for (auto a : toyworld::kAllAttributes) {
    for (bool pos : {true, false}) {
      auto gen = at::make_generator<at::CPUGeneratorImpl>(100 + i++);
      auto v = at::randn({style_dim}, gen, torch::kFloat64);
      directions::EditingDirection d;
      d.name = std::string(toyworld::attribute_name(a)) + (pos ? "+" : "-");
      d.vector = v / v.norm();
      d.attribute = a;
      d.target_presence = pos;
      d.default_powers = {0.5, 1.0};
      d.source = "probe";
      r.add(d, a == toyworld::Attribute::accessory);
    }
  }
  r.set_small_set({"smile+", "smile-"});
  return r;
}

// Shared artifacts, built once for the whole suite.
class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    torch::set_num_threads(1);
    run_ = tsupport::temp_dir("tiny_run");
    Workspace ws(run_, tsupport::tiny_run_config());
    ws.build_data();
    trainer::train_classifier(ws);
    trainer::pretrain_gan(ws);
    trainer::train_base_encoder(ws);
    hand_registry(16).save(ws.registry_path());
    p1_ = trainer::train_phase1(ws);
    p2_ = trainer::train_phase2(ws);
  }
  static Workspace ws() { return Workspace(run_, tsupport::tiny_run_config()); }

  static inline std::filesystem::path run_;
  static inline trainer::TrainResult p1_, p2_;
};

}  // namespace

TEST_F(TinyRun, EveryComponentWasCheckpointed) {
  auto w = ws();
  for (auto c : {component::kClassifier, component::kGenerator, component::kEncoderE, component::kInverter,
                 component::kEditor}) {
    EXPECT_TRUE(w.find(c).has_value()) << c;
  }
  EXPECT_EQ(p1_.steps, 4);
  EXPECT_EQ(p2_.steps, 4);
  EXPECT_EQ(w.metrics_log().read(component::kInverter).size(), 4u);
}

TEST_F(TinyRun, FrozenComponentsDoNotMove) {
  ASSERT_TRUE(p1_.frozen.count("generator"));
  EXPECT_EQ(p1_.frozen.at("generator").first, p1_.frozen.at("generator").second);
  for (const auto& name : {"generator", "inverter", "encoder_e"}) {
    ASSERT_TRUE(p2_.frozen.count(name)) << name;
    EXPECT_EQ(p2_.frozen.at(name).first, p2_.frozen.at(name).second) << name;
  }
}

TEST_F(TinyRun, Phase1LogSatisfiesTheComposition) {
  const auto w = ws().config().train.weights;
  for (const auto& r : ws().metrics_log().read(component::kInverter)) {
    const auto& v = r.values;
    const double expect = v.at("l2") + w.lpips * v.at("lpips") + w.id * v.at("id") + w.adv * v.at("adv") +
                          w.reg * v.at("reg");
    EXPECT_NEAR(v.at("total"), expect, 1e-6 * std::max(1.0, std::abs(expect)));
    if (r.step < 2) EXPECT_EQ(v.at("adv"), 0.0) << "adversarial term before adv_start";
  }
}

TEST_F(TinyRun, ResumedPhase1MatchesUninterrupted) {
  const auto other = tsupport::temp_dir("tiny_resume");
  std::filesystem::copy(run_, other, std::filesystem::copy_options::recursive);
  Workspace w(other, tsupport::tiny_run_config());
  std::filesystem::remove_all(checkpoint::component_dir(other, component::kInverter));
  trainer::TrainOptions opt;
  opt.steps = 2;
  trainer::train_phase1(w, opt);
  opt.steps = 4;
  trainer::train_phase1(w, opt);
  const auto a = ws().metrics_log().read(component::kInverter);
  const auto b = w.metrics_log().read(component::kInverter);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].step, b[i].step);
    for (const auto& [k, v] : a[i].values) {
      EXPECT_NEAR(b[i].values.at(k), v, 1e-5 * std::max(1e-12, std::abs(v))) << k << " step " << a[i].step;
    }
  }
}

TEST_F(TinyRun, EvalIsByteReproducible) {
  auto w = ws();
  const auto a = commands::eval_full(w, false).report.to_json();
  const auto b = commands::eval_full(w, false).report.to_json();
  EXPECT_EQ(a, b);
  const auto report = evalsuite::EvalReport::from_json(a);
  EXPECT_EQ(report.to_json(), a);
  EXPECT_TRUE(report.pipelines.count("sfe"));
  EXPECT_TRUE(report.pipelines.count("e_only"));
}

TEST_F(TinyRun, ZeroEditMatchesInversionOnTestImages) {
  auto w = ws();
  auto p = w.pipeline(feature_editor::PipelineMode::full);
  const auto x = w.test_set().images.slice(0, 0, 8);
  EXPECT_TRUE(torch::equal(p.invert_image(x), p.edit_image(x, directions::EditingDirection::zero(16), 0.0)));
}

TEST_F(TinyRun, AblationConfigs) {
  const auto base = ws().config();
  const auto no_fuser = trainer::ablation_config("no_fuser", base);
  EXPECT_TRUE(no_fuser.effective_inverter().no_fuser);
  EXPECT_EQ(trainer::ablation_config("k_override", base).effective_inverter().k, base.inverter.k - 2);
  EXPECT_TRUE(trainer::ablation_config("D_small", base).train.ablation.D_small);
  EXPECT_THROW(trainer::ablation_config("no_such", base), InvalidInput);
}

TEST_F(TinyRun, MissingPrerequisiteNamesTheCommand) {
  const auto empty = tsupport::temp_dir("tiny_empty");
  Workspace w(empty, tsupport::tiny_run_config());
  try {
    w.generator();
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("gan train"), std::string::npos) << e.what();
  }
}

TEST(EditSampling, PerSampleChoices) {
  const auto reg = hand_registry(16);
  const auto dirs = reg.training_directions(false);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  const auto [disp, idx] = trainer::sample_edits(dirs, 64, 8, gen);
  EXPECT_EQ(disp.sizes(), torch::IntArrayRef({64, 8, 16}));
  ASSERT_EQ(idx.size(), 64u);
  std::set<int> used(idx.begin(), idx.end());
  EXPECT_GT(used.size(), 4u);
  for (int i = 0; i < 64; ++i) {
    const auto& d = *dirs[static_cast<std::size_t>(idx[i])];
    const double p = disp[i][0].to(torch::kFloat64).dot(d.vector).item<double>();
    EXPECT_TRUE(std::abs(p - 0.5) < 1e-5 || std::abs(p - 1.0) < 1e-5) << p;
  }
}

TEST(EditSampling, PairDeltaMatchesDefinition) {
  torch::NoGradGuard ng;
  stylegen::Generator g(tsupport::tiny_generator());
  auto w = stylegen::WPlusLatent::broadcast(g->map_latent(torch::randn({2, 16})), 8);
  auto disp = torch::randn({2, 8, 16});
  const auto pair = trainer::make_edit_pair(g, w, disp, 3);
  EXPECT_TRUE(torch::allclose(pair.x_e, g->synthesize(w), 0, 1e-5));
  EXPECT_TRUE(torch::allclose(pair.x_e_edit, g->synthesize({w.rows + disp}), 0, 1e-5));
  const auto expected = g->synthesize_partial(w, 3).values - g->synthesize_partial({w.rows + disp}, 3).values;
  EXPECT_TRUE(torch::allclose(pair.delta.values, expected, 0, 1e-6));
}
