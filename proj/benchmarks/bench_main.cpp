#include <benchmark/benchmark.h>

#include <random>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "sfe/feature_editor.hpp"
#include "sfe/inverter.hpp"
#include "sfe/objectives.hpp"
#include "sfe/stylegen.hpp"
#include "sfe/toyworld.hpp"

namespace {

using namespace sfe;

stylegen::GeneratorConfig gen_config(int resolution) {
  stylegen::GeneratorConfig g;
  g.image_resolution = resolution;
  return g;
}

stylegen::WPlusLatent random_latent(stylegen::Generator& g, int batch) {
  torch::manual_seed(0);
  const auto w = g->map_latent(torch::randn({batch, g->config().style_dim}));
  return stylegen::WPlusLatent::broadcast(w, g->num_layers());
}

void BM_Synthesize(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::NoGradGuard ng;
  stylegen::Generator g(gen_config(static_cast<int>(state.range(0))));
  g->eval();
  const int b = static_cast<int>(state.range(1));
  const auto wp = random_latent(g, b);
  for (auto _ : state) benchmark::DoNotOptimize(g->synthesize(wp));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_Synthesize)->Args({32, 8})->Args({64, 8})->Unit(benchmark::kMillisecond);

void BM_SpliceResume(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::NoGradGuard ng;
  stylegen::Generator g(gen_config(64));
  g->eval();
  const int k = static_cast<int>(state.range(0));
  const auto wp = random_latent(g, 8);
  const auto f = g->synthesize_partial(wp, k);
  const auto tail = wp.tail(k);
  for (auto _ : state) benchmark::DoNotOptimize(g->synthesize_from(f, tail));
}
BENCHMARK(BM_SpliceResume)->Arg(3)->Arg(5)->Arg(7)->Unit(benchmark::kMillisecond);

void BM_InvertForward(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::NoGradGuard ng;
  const auto gcfg = gen_config(64);
  stylegen::Generator g(gcfg);
  g->eval();
  inverter::InverterConfig icfg;
  inverter::Inverter inv(icfg, gcfg, torch::zeros({gcfg.style_dim}));
  inv->eval();
  torch::manual_seed(1);
  const auto x = torch::rand({8, 3, 64, 64}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(inv->invert(g, x).f_k.values);
}
BENCHMARK(BM_InvertForward)->Unit(benchmark::kMillisecond);

void BM_FeatureEditor(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::NoGradGuard ng;
  const auto gcfg = gen_config(64);
  stylegen::Generator g(gcfg);
  g->eval();
  const int k = 5;
  feature_editor::FeatureEditor h(feature_editor::FeatureEditorConfig{}, gcfg, k);
  h->eval();
  const auto wp = random_latent(g, 8);
  const auto f = g->synthesize_partial(wp, k);
  const feature_editor::DeltaMap delta{torch::randn_like(f.values), k};
  for (auto _ : state) benchmark::DoNotOptimize(h->forward(f, delta).values);
}
BENCHMARK(BM_FeatureEditor)->Unit(benchmark::kMillisecond);

void BM_MsSsim(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(2);
  const int r = static_cast<int>(state.range(0));
  const auto a = torch::rand({16, 3, r, r}) * 2 - 1;
  const auto b = (a + 0.1 * torch::randn_like(a)).clamp(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(objectives::ms_ssim(a, b));
}
BENCHMARK(BM_MsSsim)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Frechet(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(4 * d, d), y(4 * d, d);
  for (int i = 0; i < x.size(); ++i) {
    x.data()[i] = n(rng);
    y.data()[i] = 0.5 + 1.2 * n(rng);
  }
  auto stats = [](const Eigen::MatrixXd& m) {
    const Eigen::VectorXd mu = m.colwise().mean();
    const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
    return std::pair{mu, Eigen::MatrixXd(c.transpose() * c / double(m.rows() - 1))};
  };
  const auto [m1, s1] = stats(x);
  const auto [m2, s2] = stats(y);
  for (auto _ : state) benchmark::DoNotOptimize(objectives::frechet_distance(m1, s1, m2, s2));
}
BENCHMARK(BM_Frechet)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RenderToy(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto attrs = toyworld::sample_attributes(rng);
  const int r = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(toyworld::render_sample(attrs, seed++, r).pixels);
}
BENCHMARK(BM_RenderToy)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
