// Acceptance suite. Trains (or reuses) a full run under --run, then checks
// each criterion and prints one PASS/FAIL line per criterion. Tolerances are
// fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "gradcheck.hpp"
#include "sfe/commands.hpp"
#include "sfe/errors.hpp"
#include "sfe/objectives.hpp"
#include "sfe/random.hpp"
#include "sfe/trainer.hpp"

namespace fs = std::filesystem;
using namespace sfe;

namespace {

// --- tolerances ---------------------------------------------------------------
constexpr double kSpliceTol = 1e-5;
constexpr int kSpliceLatents = 100;
constexpr double kSpliceSeconds = 60.0;
constexpr int kZeroEditImages = 50;
constexpr double kCompositionRelTol = 1e-6;
constexpr int kCompositionCases = 20;
constexpr double kGradRelTol = 1e-3;
constexpr int kGradProbes = 10;
constexpr double kFrechetIdentical = 1e-6;
constexpr double kFrechetClosedForm = 1e-8;
constexpr double kInversionL2Ratio = 0.5;
constexpr int kMinEffectiveDirections = 4;
constexpr double kMinFlipRate = 0.70;
constexpr double kMinIdSimilarity = 0.5;
constexpr double kHoldoutFlipDrop = 0.15;
constexpr double kResumeRelTol = 1e-5;
constexpr int kResumeSteps = 12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// --- shared state ---------------------------------------------------------------

struct Context {
  fs::path run;
  config::RunConfig cfg;
  std::optional<Workspace> ws;
  std::string prepare_error;
  std::optional<evalsuite::EvalReport> main_report;
  std::string main_json;
  std::map<std::string, evalsuite::EvalReport> ablation_reports;

  Workspace& workspace() {
    if (!ws) throw RuntimeFailure("trained artifacts unavailable: " + prepare_error);
    return *ws;
  }
};

void prepare(Context& ctx, int print_interval) {
  fs::create_directories(ctx.run);
  if (!fs::exists(ctx.run / "config.json")) ctx.cfg.save(ctx.run / "config.json");
  Workspace ws(ctx.run, ctx.cfg);
  trainer::TrainOptions opt;
  opt.print_interval = print_interval;
  const auto t0 = std::chrono::steady_clock::now();
  commands::build_all(ws, opt);
  for (const auto* name : {"no_inv_loss", "D_small"}) trainer::run_ablation(name, ws, opt);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::fprintf(stderr, "[acceptance] training stages done in %.1f min\n", minutes);
  ctx.ws.emplace(std::move(ws));
}

const evalsuite::EvalReport& main_report(Context& ctx) {
  if (!ctx.main_report) {
    auto& ws = ctx.workspace();
    auto out = commands::eval_full(ws, true);
    commands::write_eval(out, ws.run() / "eval");
    ctx.main_json = out.report.to_json();
    ctx.main_report = out.report;
  }
  return *ctx.main_report;
}

const evalsuite::EvalReport& ablation_report(Context& ctx, const std::string& name) {
  auto it = ctx.ablation_reports.find(name);
  if (it == ctx.ablation_reports.end()) {
    auto& ws = ctx.workspace();
    auto abl = trainer::run_ablation(name, ws, {});
    auto out = commands::eval_ablation(name, ws, abl);
    commands::write_eval(out, abl.run() / "eval");
    it = ctx.ablation_reports.emplace(name, out.report).first;
  }
  return it->second;
}

struct EditSummary {
  double mean_fid_a = 0;
  double mean_flip = 0;
  int n = 0;
};

EditSummary summarize(const evalsuite::PipelineReport& p, bool holdout) {
  EditSummary s;
  for (const auto& [name, r] : p.editing) {
    if (r.holdout != holdout) continue;
    s.mean_fid_a += r.fid.fid_a_bprime;
    s.mean_flip += r.flip_rate;
    ++s.n;
  }
  if (s.n) {
    s.mean_fid_a /= s.n;
    s.mean_flip /= s.n;
  }
  return s;
}

// --- criteria -------------------------------------------------------------------

Outcome splice_identity(Context& ctx) {
  torch::NoGradGuard ng;
  std::string source = "trained generator";
  stylegen::Generator g{nullptr};
  if (ctx.ws && ctx.ws->find(component::kGenerator)) {
    g = ctx.ws->generator();
  } else {
    g = stylegen::Generator(ctx.cfg.generator_config());
    source = "untrained generator";
  }
  g->eval();
  const auto t0 = std::chrono::steady_clock::now();
  auto gen = nn::make_generator(derive_seed(ctx.cfg.eval.seed, 1));
  const int n = g->num_layers();
  const auto z = torch::randn({kSpliceLatents, g->config().style_dim}, gen);
  auto w = stylegen::WPlusLatent::broadcast(g->map_latent(z), n);
  w.rows = w.rows + 0.5 * torch::randn(w.rows.sizes(), gen);  // exercise per-layer rows too
  double worst = 0.0;
  for (int i = 0; i < kSpliceLatents; i += 25) {
    auto wi = w.rows.slice(0, i, i + 25);
    const auto full = g->synthesize({wi});
    for (int k = 0; k < n; ++k) {
      const auto f = g->synthesize_partial({wi}, k);
      const auto resumed = g->synthesize_from(f, stylegen::WPlusLatent{wi}.tail(k));
      worst = std::max(worst, (resumed - full).abs().max().item<double>());
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= kSpliceTol && secs < kSpliceSeconds,
          fmt("max|diff| %.3g over all k", worst) + fmt(", %.1f s", secs) + " (" + source + ")"};
}

Outcome zero_edit_identity(Context& ctx) {
  auto& ws = ctx.workspace();
  auto p = ws.pipeline(feature_editor::PipelineMode::full);
  const auto x = ws.test_set().images.slice(0, 0, kZeroEditImages);
  const auto zero = directions::EditingDirection::zero(ws.config().generator.model.style_dim);
  const auto inv = p.invert_image(x);
  const auto edit = p.edit_image(x, zero, 0.0);
  const bool same = torch::equal(inv, edit);
  return {same && x.size(0) == kZeroEditImages,
          std::to_string(x.size(0)) + " images, " + (same ? "bit-identical" : "differ")};
}

Outcome delta_algebra(Context& ctx) {
  auto& ws = ctx.workspace();
  torch::NoGradGuard ng;
  auto g = ws.generator();
  auto e = ws.encoder_e();
  auto reg = ws.registry();
  auto test = ws.test_set();
  const auto x = test.images.slice(0, 0, 16);
  const int k = ws.config().effective_inverter().k;
  const int layer = ws.config().feature_editor.source_layer(k);
  const auto w_e = e->encode_wplus(x);
  int zero_ok = 0, anti_ok = 0, mask_ok = 0, total = 0;
  for (const auto& name : reg.names()) {
    const auto& d = reg.at(name);
    ++total;
    const auto z = feature_editor::compute_delta(g, w_e, d, 0.0, layer);
    zero_ok += z.values.abs().max().item<double>() == 0.0;
    const auto moved = d.apply(w_e, d.calibrated_power());
    const auto ab = feature_editor::compute_delta_between(g, w_e, moved, layer);
    const auto ba = feature_editor::compute_delta_between(g, moved, w_e, layer);
    anti_ok += torch::equal(ab.values, -ba.values);
    std::vector<torch::Tensor> masks;
    for (int i = 0; i < x.size(0); ++i) masks.push_back(test.samples[static_cast<std::size_t>(i)].face_mask);
    const auto mask = feature_editor::RegionMask::from_image_mask(torch::stack(masks),
                                                                  stylegen::GeneratorConfig::layer_resolution(layer));
    const auto masked = feature_editor::apply_mask(ab, mask);
    const auto support = masked.values.ne(0).any(1);
    mask_ok += !(support & ~mask.values).any().item<bool>();
  }
  const bool pass = zero_ok == total && anti_ok == total && mask_ok == total && total > 0;
  std::ostringstream os;
  os << total << " directions: zero " << zero_ok << "/" << total << ", antisymmetric " << anti_ok << "/" << total
     << ", mask support " << mask_ok << "/" << total;
  return {pass, os.str()};
}

Outcome loss_arithmetic(Context& ctx) {
  std::mt19937_64 rng(derive_seed(ctx.cfg.eval.seed, 4));
  auto draw = [&] { return uniform(rng, 0.0, 5.0); };
  const objectives::LossWeights w = ctx.cfg.train.weights;
  bool coefficients = w.lpips == 0.8 && w.id == 0.1 && w.adv == 0.01 && w.reg == 0.01;
  double worst = 0.0;
  bool excluded = true;
  for (int i = 0; i < kCompositionCases; ++i) {
    const objectives::ImageLossTerms<double> a{draw(), draw(), draw(), draw()};
    const objectives::ImageLossTerms<double> b{draw(), draw(), draw(), draw()};
    const double reg = draw();
    const double p1 = (a.l2 + 0.8 * a.lpips + 0.1 * a.id + 0.01 * a.adv) +
                      (b.l2 + 0.8 * b.lpips + 0.1 * b.id + 0.01 * b.adv) + 0.01 * reg;
    const double p2 = (a.l2 + 0.8 * a.lpips + 0.1 * a.id) + (b.l2 + 0.8 * b.lpips + 0.1 * b.id + 0.01 * b.adv);
    const auto c1 = objectives::compose_phase1(a, b, reg, w);
    const auto c2 = objectives::compose_phase2(a, b, w);
    worst = std::max({worst, rel_err(c1.total(), p1), rel_err(c2.total(), p2)});
    auto a_big = a;
    a_big.adv = 1e9 * (1 + i);
    excluded = excluded && objectives::compose_phase2(a_big, b, w).total() == c2.total() &&
               c2.values.count("edit.adv") == 0;
  }
  // The tensor objective used in training: the edit branch's adversarial term
  // is not part of the autograd graph.
  const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
  auto adv = torch::tensor(1.0, f64.requires_grad(true));
  objectives::ImageLossTerms<torch::Tensor> edit{torch::tensor(0.2, f64), torch::tensor(0.3, f64),
                                                 torch::tensor(0.4, f64), adv};
  objectives::ImageLossTerms<torch::Tensor> inv{torch::tensor(0.5, f64), torch::tensor(0.6, f64),
                                                torch::tensor(0.7, f64), torch::tensor(0.8, f64.requires_grad(true))};
  auto total = objectives::phase2_objective(edit, inv, w);
  auto grads = torch::autograd::grad({total}, {adv, inv.adv}, {}, false, false, true);
  const bool graph_excludes = !grads[0].defined() && grads[1].defined() && grads[1].item<double>() == w.adv;
  // Logged training breakdowns follow the same arithmetic.
  long logged = 0;
  double log_worst = 0.0;
  if (ctx.ws) {
    for (const char* c : {component::kInverter, component::kEditor}) {
      for (const auto& r : ctx.ws->metrics_log().read(c)) {
        const auto& v = r.values;
        const double hand = v.at("l2") + 0.8 * v.at("lpips") + 0.1 * v.at("id") + 0.01 * v.at("adv") +
                            0.01 * v.at("reg");
        if (std::abs(hand) > 0) log_worst = std::max(log_worst, rel_err(v.at("total"), hand));
        ++logged;
      }
    }
  }
  const bool pass = coefficients && worst <= kCompositionRelTol && excluded && graph_excludes &&
                    log_worst <= kCompositionRelTol;
  std::ostringstream os;
  os << kCompositionCases << " random breakdowns, max rel " << fmt("%.2g", worst) << "; edit-branch adv "
     << (excluded && graph_excludes ? "excluded" : "LEAKS") << "; " << logged << " logged steps, max rel "
     << fmt("%.2g", log_worst) << (coefficients ? "" : "; configured weights differ from 0.8/0.1/0.01/0.01");
  return {pass, os.str()};
}

Outcome gradient_checks(Context& ctx) {
  torch::manual_seed(static_cast<std::uint64_t>(derive_seed(ctx.cfg.eval.seed, 5) >> 1));
  auto leaf = [](at::IntArrayRef s, double scale = 1.0) {
    return (torch::randn(s, torch::kFloat64) * scale).requires_grad_(true);
  };
  std::map<std::string, tsupport::GradCheck> results;
  auto gcfg = ctx.cfg.generator_config();
  gcfg.channel_max = std::min(gcfg.channel_max, 16);
  const int k = std::min(ctx.cfg.effective_inverter().k, gcfg.num_layers() - 3);
  const int c = gcfg.feature_channels(k);
  const int s = stylegen::GeneratorConfig::layer_resolution(k);
  {
    stylegen::ModulatedConv2d conv(6, 5, 3, 8, true);
    conv->to(torch::kFloat64);
    auto x = leaf({2, 6, 6, 6});
    auto w = leaf({2, 8});
    auto probe = torch::randn({2, 5, 6, 6}, torch::kFloat64);
    auto params = conv->parameters();
    results["modulated_conv"] =
        tsupport::grad_check([&] { return (conv->forward(x, w) * probe).sum(); }, {x, w, params.front()}, kGradProbes);
  }
  {
    inverter::InverterConfig ic = ctx.cfg.effective_inverter();
    ic.k = k;
    ic.fuser_blocks = 2;
    auto gen = nn::make_generator(1);
    nn::ResidualStack fuser(2 * c, c, 2, gen);
    fuser->init_passthrough({0.5, 0.5});
    fuser->to(torch::kFloat64);
    tsupport::jitter_parameters(*fuser, 0.05, 2);
    auto x = leaf({2, 2 * c, 4, 4});
    auto probe = torch::randn({2, c, 4, 4}, torch::kFloat64);
    auto params = fuser->parameters();
    results["fuser_block"] =
        tsupport::grad_check([&] { return (fuser->forward(x) * probe).sum(); }, {x, params.front()}, kGradProbes);
  }
  {
    feature_editor::FeatureEditorConfig hc;
    hc.blocks = 2;
    feature_editor::FeatureEditor h(hc, gcfg, k);
    h->to(torch::kFloat64);
    tsupport::jitter_parameters(*h, 0.05, 3);
    auto f = leaf({1, c, s, s});
    auto d = leaf({1, c, s, s});
    auto probe = torch::randn({1, c, s, s}, torch::kFloat64);
    results["h_block"] = tsupport::grad_check(
        [&] { return (h->forward({f, k}, {d, k, "d", 1.0}).values * probe).sum(); }, {f, d, h->parameters().front()},
        kGradProbes);
  }
  {
    const int big = k + 2;
    feature_editor::DeltaReducer red(gcfg, big, k, 4);
    red->to(torch::kFloat64);
    tsupport::jitter_parameters(*red, 0.05, 5);
    const int sb = stylegen::GeneratorConfig::layer_resolution(big);
    auto d = leaf({1, gcfg.feature_channels(big), sb, sb});
    auto probe = torch::randn({1, c, s, s}, torch::kFloat64);
    auto params = red->parameters();
    results["delta_reducer"] = tsupport::grad_check(
        [&] { return (red->forward({d, big, "d", 1.0}).values * probe).sum(); }, {d, params.front(), params.back()},
        kGradProbes);
  }
  {
    objectives::ClassifierConfig cc;
    cc.image_resolution = 32;
    cc.stage_channels = {4, 6, 6, 8};
    cc.embedding_dim = 8;
    objectives::AttributeClassifier net(cc);
    net->to(torch::kFloat64);
    auto a = leaf({2, 3, 32, 32}, 0.5);
    auto b = torch::randn({2, 3, 32, 32}, torch::kFloat64) * 0.5;
    results["loss_l2"] = tsupport::grad_check([&] { return objectives::l2(a, b); }, {a}, kGradProbes);
    results["loss_perceptual"] =
        tsupport::grad_check([&] { return objectives::perceptual(net, a, b); }, {a}, kGradProbes);
    results["loss_identity"] =
        tsupport::grad_check([&] { return objectives::identity_loss(net, a, b); }, {a}, kGradProbes);
    auto sr = leaf({8});
    auto sf = leaf({8});
    results["loss_adv_g"] = tsupport::grad_check([&] { return objectives::adversarial_g(sf); }, {sf}, kGradProbes);
    results["loss_adv_d"] =
        tsupport::grad_check([&] { return objectives::adversarial_d(sr, sf); }, {sr, sf}, kGradProbes);
    auto f = leaf({2, c, 4, 4});
    results["loss_reg"] = tsupport::grad_check([&] { return objectives::reg_norm(f); }, {f}, kGradProbes);
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, r] : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  }
  return {worst <= kGradRelTol, std::to_string(results.size()) + " checks x " + std::to_string(kGradProbes) +
                                    " probes, worst " + fmt("%.2g", worst) + " (" + worst_name + ")"};
}

Outcome frechet_suite(Context& ctx) {
  auto gen = nn::make_generator(derive_seed(ctx.cfg.eval.seed, 6));
  const auto feats = torch::randn({500, 12}, gen, torch::kFloat64);
  const auto st = objectives::gaussian_stats(feats);
  const double identical = std::abs(objectives::frechet_distance(st, st));
  Eigen::VectorXd m0(1), m1(1);
  m0 << 0.0;
  m1 << 1.0;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  const double unit = objectives::frechet_distance(m0, one, m1, one);
  std::mt19937_64 rng(derive_seed(ctx.cfg.eval.seed, 7));
  const int d = 16;
  Eigen::VectorXd mu1(d), mu2(d), v1(d), v2(d);
  double closed = 0.0;
  for (int i = 0; i < d; ++i) {
    mu1[i] = uniform(rng, -1, 1);
    mu2[i] = uniform(rng, -1, 1);
    v1[i] = uniform(rng, 0.05, 3);
    v2[i] = uniform(rng, 0.05, 3);
    closed += std::pow(mu1[i] - mu2[i], 2) + std::pow(std::sqrt(v1[i]) - std::sqrt(v2[i]), 2);
  }
  const double diag = objectives::frechet_distance(mu1, v1.asDiagonal().toDenseMatrix(), mu2,
                                                   v2.asDiagonal().toDenseMatrix());
  const bool pass = identical <= kFrechetIdentical && std::abs(unit - 1.0) <= kFrechetClosedForm &&
                    std::abs(diag - closed) <= kFrechetClosedForm;
  return {pass, fmt("identical %.2g", identical) + fmt(", 1-D %.12f", unit) +
                    fmt(", diagonal |diff| %.2g", std::abs(diag - closed))};
}

Outcome freeze_contracts(Context& ctx) {
  auto& ws = ctx.workspace();
  const auto g_now = stylegen::parameter_checksum(*ws.generator());
  const auto i_now = stylegen::parameter_checksum(*ws.inverter());
  const auto e_now = stylegen::parameter_checksum(*ws.encoder_e());
  std::vector<std::string> problems;
  int checked = 0;
  auto check = [&](const fs::path& run, const char* component, const std::map<std::string, std::uint64_t>& expect) {
    auto b = checkpoint::latest(run, component);
    if (!b) {
      problems.push_back(std::string(component) + " missing");
      return;
    }
    const auto meta = checkpoint::read_meta(*b);
    for (const auto& [name, sum] : expect) {
      auto it = meta.frozen.find(name);
      ++checked;
      if (it == meta.frozen.end()) {
        problems.push_back(std::string(component) + ": no record for " + name);
      } else if (it->second.first != it->second.second) {
        problems.push_back(std::string(component) + ": " + name + " changed");
      } else if (it->second.first != sum) {
        problems.push_back(std::string(component) + ": " + name + " differs from its checkpoint");
      }
    }
  };
  check(ws.run(), component::kInverter, {{"generator", g_now}});
  check(ws.run(), component::kEditor, {{"generator", g_now}, {"inverter", i_now}, {"encoder_e", e_now}});
  for (const auto* name : {"no_inv_loss", "D_small"}) {
    check(trainer::ablation_run(ws.run(), name), component::kEditor,
          {{"generator", g_now}, {"inverter", i_now}, {"encoder_e", e_now}});
  }
  std::string detail = std::to_string(checked) + " checksum records";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && checked > 0, detail};
}

Outcome inversion_trend(Context& ctx) {
  const auto& r = main_report(ctx);
  const auto& s = r.pipelines.at("sfe").inversion;
  const auto& e = r.pipelines.at("e_only").inversion;
  const bool pass = s.l2 <= kInversionL2Ratio * e.l2 && s.perceptual < e.perceptual;
  return {pass, fmt("L2 sfe %.4g vs e_only %.4g", s.l2, e.l2) + fmt(" (ratio %.3f)", s.l2 / e.l2) +
                    fmt("; perceptual %.4g vs %.4g", s.perceptual, e.perceptual)};
}

Outcome editing_efficacy(Context& ctx) {
  const auto& r = main_report(ctx);
  const auto& sfe = r.pipelines.at("sfe");
  std::vector<std::string> good;
  for (const auto& [name, d] : sfe.editing) {
    if (!d.holdout && d.flip_rate >= kMinFlipRate && d.id_similarity >= kMinIdSimilarity) good.push_back(name);
  }
  const auto& no_h = ablation_report(ctx, "no_H").pipelines.at("no_H");
  const auto a = summarize(sfe, false);
  const auto b = summarize(no_h, false);
  const bool pass = static_cast<int>(good.size()) >= kMinEffectiveDirections && a.mean_fid_a <= b.mean_fid_a;
  std::string names;
  for (const auto& n : good) names += (names.empty() ? "" : ",") + n;
  return {pass, std::to_string(good.size()) + " directions with flip>=0.70 & id>=0.5 [" + names + "]" +
                    fmt("; mean editing-FID(A,B') sfe %.4g vs no_H %.4g", a.mean_fid_a, b.mean_fid_a)};
}

Outcome ablation_orderings(Context& ctx) {
  const auto& main = main_report(ctx).pipelines.at("sfe");
  const auto& no_h = ablation_report(ctx, "no_H").pipelines.at("no_H");
  const auto& no_inv = ablation_report(ctx, "no_inv_loss").pipelines.at("no_inv_loss");
  const auto& d_small = ablation_report(ctx, "D_small").pipelines.at("D_small");
  const bool h_inv = no_h.inversion.l2 < main.inversion.l2 && no_h.inversion.perceptual < main.inversion.perceptual;
  const bool h_edit = summarize(no_h, false).mean_fid_a > summarize(main, false).mean_fid_a;
  const bool inv_worse =
      no_inv.inversion.l2 > main.inversion.l2 && no_inv.inversion.perceptual > main.inversion.perceptual;
  const double flip_full = summarize(main, true).mean_flip;
  const double flip_small = summarize(d_small, true).mean_flip;
  const bool holdout_ok = summarize(main, true).n > 0 && flip_small >= flip_full - kHoldoutFlipDrop;
  std::ostringstream os;
  os << "no_H inversion " << (h_inv ? "better" : "NOT better")
     << fmt(" (L2 %.4g vs %.4g)", no_h.inversion.l2, main.inversion.l2) << ", editing "
     << (h_edit ? "worse" : "NOT worse")
     << fmt(" (FID %.4g vs %.4g)", summarize(no_h, false).mean_fid_a, summarize(main, false).mean_fid_a)
     << "; no_inv_loss inversion " << (inv_worse ? "worse" : "NOT worse")
     << fmt(" (L2 %.4g vs %.4g)", no_inv.inversion.l2, main.inversion.l2) << "; D_small holdout flip "
     << fmt("%.3f vs full %.3f", flip_small, flip_full);
  return {h_inv && h_edit && inv_worse && holdout_ok, os.str()};
}

double log_mismatch(const std::vector<checkpoint::MetricRecord>& a, const std::vector<checkpoint::MetricRecord>& b,
                    std::string* why) {
  if (a.size() != b.size()) {
    *why = "record counts " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
    return INFINITY;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step) {
      *why = "step mismatch";
      return INFINITY;
    }
    for (const auto& [k, v] : a[i].values) {
      auto it = b[i].values.find(k);
      if (it == b[i].values.end()) {
        *why = "missing key " + k;
        return INFINITY;
      }
      if (v != it->second) worst = std::max(worst, rel_err(v, it->second));
    }
  }
  return worst;
}

Outcome determinism(Context& ctx) {
  auto& ws = ctx.workspace();
  main_report(ctx);
  const auto again = commands::eval_full(ws, false).report.to_json();
  const bool eval_same = again == ctx.main_json;

  // Phase 1 and phase 2, split in half and resumed, against straight runs.
  auto cfg = ws.config();
  cfg.train.phase1_steps = kResumeSteps;
  cfg.train.phase2_steps = kResumeSteps;
  cfg.train.adv_start_step = kResumeSteps / 3;
  cfg.train.checkpoint_interval = kResumeSteps;
  const fs::path root = ws.run() / "acceptance" / "resume";
  double worst = 0.0;
  std::string why;
  for (const char* component : {component::kInverter, component::kEditor}) {
    std::vector<checkpoint::MetricRecord> logs[2];
    for (int split = 0; split < 2; ++split) {
      const auto dir = root / (split ? "split" : "straight");
      if (component == std::string(component::kInverter)) fs::remove_all(dir);
      fs::create_directories(dir);
      Workspace w(dir, cfg, ws.run());
      auto train = component == std::string(component::kInverter) ? trainer::train_phase1 : trainer::train_phase2;
      trainer::TrainOptions opt;
      if (split) {
        opt.steps = kResumeSteps / 2;
        train(w, opt);
      }
      opt.steps = kResumeSteps;
      train(w, opt);
      logs[split] = w.metrics_log().read(component);
    }
    worst = std::max(worst, log_mismatch(logs[0], logs[1], &why));
  }
  const bool pass = eval_same && worst <= kResumeRelTol;
  std::string detail = std::string("eval full ") + (eval_same ? "byte-identical" : "DIFFERS") +
                       fmt("; resumed vs straight logs max rel %.2g", worst);
  if (!why.empty()) detail += " (" + why + ")";
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Acceptance criteria"};
  std::string run = "acceptance_run";
  std::string config_path = SFE_DEFAULT_CONFIG;
  std::vector<int> only;
  bool strict = false;
  int print_interval = 500;
  app.add_option("--run", run, "Run directory (artifacts are reused when present)");
  app.add_option("--config", config_path, "Run config for a fresh run directory");
  app.add_option("--only", only, "Criteria to check, e.g. 3,5 (default: all)")->delimiter(',');
  app.add_option("--print-interval", print_interval, "Training progress interval, 0 for silence");
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.run = run;
  try {
    ctx.cfg = fs::exists(ctx.run / "config.json") ? config::RunConfig::load(ctx.run / "config.json")
                                                   : config::RunConfig::load(config_path);
    ctx.cfg.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  using Check = std::function<Outcome(Context&)>;
  const std::vector<std::tuple<int, std::string, Check, bool>> criteria = {
      {1, "splice identity", splice_identity, false},
      {2, "zero-edit identity", zero_edit_identity, true},
      {3, "delta algebra", delta_algebra, true},
      {4, "loss arithmetic", loss_arithmetic, false},
      {5, "gradient checks", gradient_checks, false},
      {6, "frechet suite", frechet_suite, false},
      {7, "freeze contracts", freeze_contracts, true},
      {8, "inversion trend vs e_only", inversion_trend, true},
      {9, "editing efficacy", editing_efficacy, true},
      {10, "ablation orderings", ablation_orderings, true},
      {11, "determinism", determinism, true},
  };
  auto selected = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  bool need_training = false;
  for (const auto& [id, name, fn, trained] : criteria) need_training |= trained && selected(id);
  if (need_training) {
    try {
      prepare(ctx, print_interval);
    } catch (const std::exception& e) {
      ctx.prepare_error = e.what();
      std::fprintf(stderr, "[acceptance] training failed: %s\n", e.what());
    }
  } else if (fs::exists(ctx.run)) {
    ctx.ws.emplace(ctx.run, ctx.cfg);
  }

  std::vector<std::string> lines;
  {
    std::ostringstream os;
    os << "profile: " << ctx.cfg.data.resolution << " px, k=" << ctx.cfg.effective_inverter().k << ", phase1 "
       << ctx.cfg.train.phase1_steps << " / phase2 " << ctx.cfg.train.phase2_steps << " steps, run " << ctx.run.string();
    lines.push_back(os.str());
  }
  std::printf("%s\n", lines.back().c_str());
  int failed = 0, errored = 0;
  for (const auto& [id, name, fn, trained] : criteria) {
    if (!selected(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      ++errored;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[96];
    std::snprintf(head, sizeof head, "[%s] %2d %-26s", o.pass ? "PASS" : "FAIL", id, name.c_str());
    lines.push_back(std::string(head) + " " + o.detail + fmt("  (%.0f s)", secs));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  const int evaluated = static_cast<int>(lines.size()) - 1;
  std::printf("acceptance: %d/%d criteria passed\n", evaluated - failed, evaluated);
  try {
    fs::create_directories(ctx.run / "acceptance");
    std::ofstream out(ctx.run / "acceptance" / "summary.txt");
    for (const auto& l : lines) out << l << "\n";
  } catch (const std::exception&) {
  }
  // Crashed training or a criterion that threw is a harness failure; a
  // measured FAIL is only fatal under --strict.
  if (!ctx.prepare_error.empty() || errored) return 2;
  return strict && failed ? 3 : 0;
}
