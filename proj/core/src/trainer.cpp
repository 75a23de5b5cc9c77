#include "sfe/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <torch/torch.h>

#include "sfe/blocks.hpp"
#include "sfe/errors.hpp"
#include "sfe/objectives.hpp"
#include "sfe/random.hpp"

namespace fs = std::filesystem;

namespace sfe::trainer {

namespace {

using objectives::ImageLossTerms;
using objectives::LossBreakdown;

void check_finite(const std::string& component, std::int64_t step, const std::map<std::string, double>& values) {
  for (const auto& [k, v] : values) {
    if (!std::isfinite(v)) {
      throw TrainingDiverged(component + " diverged at step " + std::to_string(step) + ": " + k + " = " +
                             std::to_string(v));
    }
  }
}

int total_steps(const TrainOptions& opt, int configured) {
  const int s = opt.steps.value_or(configured);
  if (s < 0) throw InvalidInput("step count must be >= 0");
  return s;
}

// Restores the newest checkpoint of `component` when resuming; returns the
// step to continue from. Without a checkpoint, clears stale log records.
std::int64_t maybe_resume(const Workspace& ws, const std::string& component, const TrainOptions& opt,
                          checkpoint::Contents& contents, at::Generator& gen) {
  std::int64_t start = 0;
  auto latest = opt.resume ? checkpoint::latest(ws.run(), component) : std::nullopt;
  if (latest) {
    contents.tensors["rng"] = torch::Tensor();
    start = checkpoint::load(*latest, contents, ws.arch(component)).step;
    gen.set_state(contents.tensors["rng"]);
  } else {
    fs::remove_all(checkpoint::component_dir(ws.run(), component));
  }
  ws.metrics_log().truncate(component, start);
  return start;
}

fs::path save_bundle(const Workspace& ws, const std::string& component, std::int64_t step, checkpoint::Contents c,
                     at::Generator& gen, std::uint64_t seed, const std::map<std::string, double>& metrics,
                     const std::string& optimizer = "adam",
                     const std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>& frozen = {}) {
  c.tensors["rng"] = gen.get_state();
  checkpoint::Meta meta;
  meta.component = component;
  meta.step = step;
  meta.arch = ws.arch(component);
  meta.seed = seed;
  meta.optimizer = optimizer;
  meta.config_hash = ws.config().hash();
  meta.metrics = metrics;
  meta.frozen = frozen;
  return checkpoint::save(ws.run(), meta, c, ws.config());
}

void progress(const TrainOptions& opt, const std::string& component, std::int64_t step, int total,
              const std::map<std::string, double>& v) {
  if (opt.print_interval <= 0 || (step % opt.print_interval != 0 && step + 1 != total)) return;
  std::fprintf(stderr, "[%s] step %lld/%d", component.c_str(), static_cast<long long>(step + 1), total);
  for (const auto& [k, x] : v) {
    if (k.find('.') == std::string::npos) std::fprintf(stderr, " %s=%.4f", k.c_str(), x);
  }
  std::fprintf(stderr, "\n");
}

torch::Tensor batch_indices(std::int64_t n, int b, at::Generator& gen) { return torch::randint(n, {b}, gen); }

ImageLossTerms<torch::Tensor> image_terms(objectives::AttributeClassifier& clf, const torch::Tensor& target,
                                          const torch::Tensor& recon) {
  ImageLossTerms<torch::Tensor> t;
  t.l2 = objectives::l2(recon, target);
  t.lpips = objectives::perceptual(clf, recon, target);
  t.id = objectives::identity_loss(clf, recon, target);
  t.adv = torch::zeros({}, recon.options());
  return t;
}

double fid_against(objectives::AttributeClassifier& clf, stylegen::Generator& g, const torch::Tensor& real,
                   std::uint64_t seed) {
  torch::NoGradGuard ng;
  auto w = directions::sample_w(g, static_cast<int>(real.size(0)), seed);
  std::vector<torch::Tensor> imgs;
  for (long i = 0; i < w.size(0); i += 128) {
    imgs.push_back(g->synthesize(stylegen::WPlusLatent::broadcast(w.slice(0, i, i + 128), g->num_layers())));
  }
  return objectives::toy_fid(clf, torch::cat(imgs), real);
}

void copy_params(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard ng;
  auto dp = dst.named_parameters(true);
  for (const auto& p : src.named_parameters(true)) dp[p.key()].copy_(p.value());
  auto db = dst.named_buffers(true);
  for (const auto& b : src.named_buffers(true)) db[b.key()].copy_(b.value());
}

}  // namespace

// ---------------------------------------------------------------------------

TrainResult train_classifier(const Workspace& ws, const TrainOptions& opt) {
  const auto& cfg = ws.config();
  auto train = ws.train_set();
  auto test = ws.test_set();
  objectives::AttributeClassifier net(cfg.classifier_config());
  auto tc = cfg.eval.classifier_train;
  tc.steps = total_steps(opt, tc.steps);
  auto report = objectives::train_classifier(net, train.samples, test.samples, tc);
  std::map<std::string, double> m{{"final_loss", report.final_loss}};
  for (auto a : toyworld::kAllAttributes) {
    m["test_accuracy." + std::string(toyworld::attribute_name(a))] = report.test_accuracy[static_cast<int>(a)];
  }
  fs::remove_all(checkpoint::component_dir(ws.run(), component::kClassifier));
  auto gen = nn::make_generator(tc.seed);
  checkpoint::Contents c;
  c.modules = {{"classifier", net.ptr().get()}};
  TrainResult r;
  r.checkpoint = save_bundle(ws, component::kClassifier, tc.steps, c, gen, tc.seed, m);
  r.steps = tc.steps;
  r.metrics = m;
  return r;
}

// ---------------------------------------------------------------------------

TrainResult pretrain_gan(const Workspace& ws, const TrainOptions& opt) {
  const auto& cfg = ws.config();
  const auto& tc = cfg.generator.train;
  const int total = total_steps(opt, tc.steps);
  auto data = ws.train_set();
  const auto n = data.images.size(0);

  auto g = ws.new_generator();
  auto g_ema = ws.new_generator();
  auto d = ws.new_discriminator();
  torch::optim::Adam opt_g(g->parameters(), torch::optim::AdamOptions(tc.lr).betas({0.0, 0.99}));
  torch::optim::Adam opt_d(d->parameters(), torch::optim::AdamOptions(tc.lr).betas({0.0, 0.99}));
  auto gen = nn::make_generator(tc.seed);

  checkpoint::Contents c;
  c.modules = {{"generator", g.ptr().get()}, {"generator_ema", g_ema.ptr().get()}, {"discriminator", d.ptr().get()}};
  c.optimizers = {{"generator", &opt_g}, {"discriminator", &opt_d}};
  const auto start = maybe_resume(ws, component::kGenerator, opt, c, gen);

  std::optional<objectives::AttributeClassifier> clf;
  if (ws.find(component::kClassifier)) clf = ws.classifier();
  auto test = clf ? ws.test_set().images : torch::Tensor();
  std::map<std::string, double> metrics;
  if (clf && start == 0) {
    g_ema->eval();
    metrics["fid_init"] = fid_against(*clf, g_ema, test, derive_seed(tc.seed, 7));
  }

  const int style_dim = cfg.generator.model.style_dim;
  const int layers = g->num_layers();
  const int b = tc.batch_size;
  auto log = ws.metrics_log();
  g->train();
  d->train();
  for (std::int64_t step = start; step < total; ++step) {
    // critic
    auto z = torch::randn({b, style_dim}, gen);
    torch::Tensor fake;
    {
      torch::NoGradGuard ng;
      fake = g->synthesize(stylegen::WPlusLatent::broadcast(g->map_latent(z), layers));
    }
    auto real = data.images.index_select(0, batch_indices(n, b, gen));
    auto loss_d = objectives::adversarial_d(d->forward(real), d->forward(fake));
    double r1_value = 0.0;
    if (step % tc.r1_interval == 0 && tc.r1_gamma > 0) {
      auto r = real.detach().requires_grad_(true);
      auto score = d->forward(r);
      auto grad = torch::autograd::grad({score.sum()}, {r}, {}, true, true)[0];
      auto r1 = grad.pow(2).sum({1, 2, 3}).mean();
      r1_value = r1.item<double>();
      loss_d = loss_d + r1 * (0.5 * tc.r1_gamma * tc.r1_interval);
    }
    opt_d.zero_grad();
    loss_d.backward();
    opt_d.step();

    // generator
    z = torch::randn({b, style_dim}, gen);
    auto img = g->synthesize(stylegen::WPlusLatent::broadcast(g->map_latent(z), layers));
    auto loss_g = objectives::adversarial_g(d->forward(img));
    opt_g.zero_grad();
    opt_d.zero_grad();
    loss_g.backward();
    opt_g.step();
    {
      torch::NoGradGuard ng;
      auto pe = g_ema->named_parameters(true);
      for (const auto& p : g->named_parameters(true)) pe[p.key()].lerp_(p.value(), 1.0 - tc.ema_decay);
    }

    std::map<std::string, double> v{{"loss_d", loss_d.item<double>()}, {"loss_g", loss_g.item<double>()}};
    if (step % tc.r1_interval == 0) v["r1"] = r1_value;
    check_finite(component::kGenerator, step, v);
    log.append({component::kGenerator, step, v});
    progress(opt, component::kGenerator, step, total, v);
    if ((step + 1) % cfg.train.checkpoint_interval == 0 && step + 1 < total) {
      save_bundle(ws, component::kGenerator, step + 1, c, gen, tc.seed, {});
    }
  }

  // w_mean is a function of the final EMA weights only.
  {
    torch::NoGradGuard ng;
    g_ema->eval();
    auto w = directions::sample_w(g_ema, tc.w_mean_samples, derive_seed(tc.seed, 3));
    auto m = w.mean(0);
    g_ema->set_w_mean(m);
    g->set_w_mean(m);
  }
  if (clf) {
    metrics["fid_final"] = fid_against(*clf, g_ema, test, derive_seed(tc.seed, 7));
    metrics["fid_threshold"] = tc.fid_threshold;
  }
  TrainResult r;
  r.checkpoint = save_bundle(ws, component::kGenerator, total, c, gen, tc.seed, metrics);
  r.steps = total;
  r.metrics = metrics;
  return r;
}

// ---------------------------------------------------------------------------

TrainResult train_base_encoder(const Workspace& ws, const TrainOptions& opt) {
  const auto& cfg = ws.config();
  const auto& ec = cfg.encoder_e;
  const int total = total_steps(opt, ec.steps);
  auto data = ws.train_set();
  const auto n = data.images.size(0);
  auto g = ws.generator();
  auto clf = ws.classifier();
  const auto g_sum = stylegen::parameter_checksum(*g);

  auto e = ws.new_encoder_e(g->w_mean());
  torch::optim::Adam opt_e(e->parameters(), torch::optim::AdamOptions(ec.lr));
  auto gen = nn::make_generator(ec.seed);
  checkpoint::Contents c;
  c.modules = {{"encoder_e", e.ptr().get()}};
  c.optimizers = {{"encoder_e", &opt_e}};
  const auto start = maybe_resume(ws, component::kEncoderE, opt, c, gen);

  const auto& w8 = cfg.train.weights;
  auto log = ws.metrics_log();
  e->train();
  for (std::int64_t step = start; step < total; ++step) {
    auto x = data.images.index_select(0, batch_indices(n, ec.batch_size, gen));
    auto enc = e->forward(x);
    auto recon = g->synthesize(enc.w);
    auto t = image_terms(clf, x, recon);
    auto edit_reg = enc.offsets.pow(2).sum({1, 2}).mean();
    auto loss = objectives::image_loss(t, w8, false) + ec.model.editability_weight * edit_reg;
    opt_e.zero_grad();
    loss.backward();
    opt_e.step();
    std::map<std::string, double> v{{"l2", t.l2.item<double>()},
                                    {"lpips", t.lpips.item<double>()},
                                    {"id", t.id.item<double>()},
                                    {"offset_norm", edit_reg.item<double>()},
                                    {"total", loss.item<double>()}};
    check_finite(component::kEncoderE, step, v);
    log.append({component::kEncoderE, step, v});
    progress(opt, component::kEncoderE, step, total, v);
    if ((step + 1) % cfg.train.checkpoint_interval == 0 && step + 1 < total) {
      save_bundle(ws, component::kEncoderE, step + 1, c, gen, ec.seed, {});
    }
  }
  TrainResult r;
  r.frozen["generator"] = {g_sum, stylegen::parameter_checksum(*g)};
  if (r.frozen["generator"].first != r.frozen["generator"].second) {
    throw RuntimeFailure("generator parameters changed while training the base encoder");
  }
  r.checkpoint = save_bundle(ws, component::kEncoderE, total, c, gen, ec.seed, {}, "adam", r.frozen);
  r.steps = total;
  return r;
}

// ---------------------------------------------------------------------------

TrainResult train_phase1(const Workspace& ws, const TrainOptions& opt) {
  const auto& cfg = ws.config();
  const auto& tc = cfg.train;
  const int total = total_steps(opt, tc.phase1_steps);
  auto data = ws.train_set();
  const auto n = data.images.size(0);
  auto g = ws.generator();
  auto clf = ws.classifier();
  const auto g_sum = stylegen::parameter_checksum(*g);

  auto inv = ws.new_inverter(g->w_mean());
  auto d = ws.discriminator(component::kGenerator);
  torch::optim::Adam opt_i(inv->parameters(), torch::optim::AdamOptions(tc.lr_main));
  torch::optim::Adam opt_d(d->parameters(), torch::optim::AdamOptions(tc.lr_disc));
  auto gen = nn::make_generator(tc.seed);
  checkpoint::Contents c;
  c.modules = {{"inverter", inv.ptr().get()}, {"discriminator", d.ptr().get()}};
  c.optimizers = {{"inverter", &opt_i}, {"discriminator", &opt_d}};
  const auto start = maybe_resume(ws, component::kInverter, opt, c, gen);

  const int k = inv->k();
  auto log = ws.metrics_log();
  inv->train();
  d->train();
  for (std::int64_t step = start; step < total; ++step) {
    const bool adv = step >= tc.adv_start_step;
    auto x = data.images.index_select(0, batch_indices(n, tc.batch_size, gen));
    auto res = inv->invert(g, x);
    auto x_hat = g->synthesize_from(res.f_k, res.w.tail(k));
    auto x_hat_w = g->synthesize(res.w);
    auto recon = image_terms(clf, x, x_hat);
    auto w_only = image_terms(clf, x, x_hat_w);
    if (adv) {
      recon.adv = objectives::adversarial_g(d->forward(x_hat));
      w_only.adv = objectives::adversarial_g(d->forward(x_hat_w));
    }
    auto reg = objectives::reg_norm(res.f_k.values);
    auto loss = objectives::phase1_objective(recon, w_only, reg, tc.weights, tc.w_pair_scale);
    opt_i.zero_grad();
    loss.backward();
    opt_i.step();

    double loss_d_value = 0.0;
    if (adv) {
      auto fakes = torch::cat({x_hat.detach(), x_hat_w.detach()});
      auto loss_d = objectives::adversarial_d(d->forward(x), d->forward(fakes));
      opt_d.zero_grad();
      loss_d.backward();
      opt_d.step();
      loss_d_value = loss_d.item<double>();
    }

    auto br = objectives::compose_phase1(objectives::to_double(recon), objectives::to_double(w_only),
                                         reg.item<double>(), tc.weights, tc.w_pair_scale);
    auto v = br.values;
    v["loss_d"] = loss_d_value;
    check_finite(component::kInverter, step, v);
    log.append({component::kInverter, step, v});
    progress(opt, component::kInverter, step, total, v);
    if ((step + 1) % tc.checkpoint_interval == 0 && step + 1 < total) {
      save_bundle(ws, component::kInverter, step + 1, c, gen, tc.seed, {});
    }
  }
  TrainResult r;
  r.frozen["generator"] = {g_sum, stylegen::parameter_checksum(*g)};
  if (r.frozen["generator"].first != r.frozen["generator"].second) {
    throw RuntimeFailure("generator parameters changed during phase 1");
  }
  r.checkpoint = save_bundle(ws, component::kInverter, total, c, gen, tc.seed, {}, "adam", r.frozen);
  r.steps = total;
  return r;
}

// ---------------------------------------------------------------------------

EditPair make_edit_pair(stylegen::Generator& g, const stylegen::WPlusLatent& w_e, const torch::Tensor& displacement,
                        int source_layer) {
  torch::NoGradGuard ng;
  const int n = g->num_layers();
  auto disp = displacement.dim() == 2 ? displacement.unsqueeze(0) : displacement;
  EditPair p;
  p.w_e = w_e;
  p.w_e_edit = {w_e.rows + disp.to(w_e.rows.scalar_type())};
  auto fa = g->synthesize_partial(p.w_e, source_layer);
  auto fb = g->synthesize_partial(p.w_e_edit, source_layer);
  p.delta = {fa.values - fb.values, source_layer, "", 0.0};
  const auto tail = source_layer;
  p.x_e = g->synthesize_from(fa, p.w_e.tail(tail));
  p.x_e_edit = g->synthesize_from(fb, p.w_e_edit.tail(tail));
  (void)n;
  return p;
}

std::pair<torch::Tensor, std::vector<int>> sample_edits(const std::vector<const directions::EditingDirection*>& dirs,
                                                        int batch, int num_layers, at::Generator& gen) {
  if (dirs.empty()) throw InvalidInput("no training directions");
  auto pick = torch::randint(static_cast<long>(dirs.size()), {batch}, gen);
  auto pick_power = torch::rand({batch}, gen);
  std::vector<torch::Tensor> rows;
  std::vector<int> chosen;
  for (int i = 0; i < batch; ++i) {
    const int j = static_cast<int>(pick[i].item<long>());
    const auto* d = dirs[static_cast<std::size_t>(j)];
    const auto& ps = d->default_powers;
    if (ps.empty()) throw InvalidInput("direction '" + d->name + "' has no default powers");
    auto pi = std::min<std::size_t>(ps.size() - 1, static_cast<std::size_t>(pick_power[i].item<double>() * ps.size()));
    rows.push_back(d->displacement(num_layers, ps[pi], torch::kFloat32));
    chosen.push_back(j);
  }
  return {torch::stack(rows), chosen};
}

TrainResult train_phase2(const Workspace& ws, const TrainOptions& opt) {
  const auto& cfg = ws.config();
  const auto& tc = cfg.train;
  const int total = total_steps(opt, tc.phase2_steps);
  if (!ws.find(component::kInverter)) {
    throw InvalidInput("missing inverter checkpoint under " + ws.run().string() + " (run `phase1 train` first)");
  }
  auto data = ws.train_set();
  const auto n = data.images.size(0);
  auto g = ws.generator();
  auto clf = ws.classifier();
  auto inv = ws.inverter();
  auto registry = ws.registry();
  std::optional<encoder_w::BaseEncoder> e;
  if (!tc.ablation.no_E) e = ws.encoder_e();
  const auto dirs = registry.training_directions(tc.ablation.D_small);

  std::map<std::string, std::uint64_t> before{{"generator", stylegen::parameter_checksum(*g)},
                                              {"inverter", stylegen::parameter_checksum(*inv)}};
  if (e) before["encoder_e"] = stylegen::parameter_checksum(**e);

  auto h = ws.new_editor();
  auto d = ws.discriminator(tc.reset_discriminator ? component::kGenerator : component::kInverter);
  torch::optim::Adam opt_h(h->parameters(), torch::optim::AdamOptions(tc.lr_main));
  torch::optim::Adam opt_d(d->parameters(), torch::optim::AdamOptions(tc.lr_disc));
  auto gen = nn::make_generator(derive_seed(tc.seed, 2));
  checkpoint::Contents c;
  c.modules = {{"editor", h.ptr().get()}, {"discriminator", d.ptr().get()}};
  c.optimizers = {{"editor", &opt_h}, {"discriminator", &opt_d}};
  const auto start = maybe_resume(ws, component::kEditor, opt, c, gen);

  const int k = inv->k();
  const int source = cfg.feature_editor.source_layer(k);
  const int layers = g->num_layers();
  auto log = ws.metrics_log();
  h->train();
  d->train();
  for (std::int64_t step = start; step < total; ++step) {
    auto x = data.images.index_select(0, batch_indices(n, tc.batch_size, gen));
    auto [disp, chosen] = sample_edits(dirs, tc.batch_size, layers, gen);

    // Steps 1-3: synthetic pair from the editable encoder (or the inverter).
    stylegen::WPlusLatent w_src;
    {
      torch::NoGradGuard ng;
      w_src = e ? (*e)->encode_wplus(x) : inv->invert(g, x).w;
    }
    auto pair = make_edit_pair(g, w_src, disp, source);

    // Steps 4-7: invert X_E, edit, compare with X_E'.
    inverter::Inversion res_e;
    {
      torch::NoGradGuard ng;
      res_e = inv->invert(g, pair.x_e);
    }
    stylegen::WPlusLatent w_edit{res_e.w.rows + disp};
    auto delta = pair.delta;
    if (source != k) delta = h->reducer()->forward(delta);
    auto f_edit = h->forward(res_e.f_k, delta);
    auto x_hat_edit = g->synthesize_from(f_edit, w_edit.tail(k));
    auto edit_terms = image_terms(clf, pair.x_e_edit, x_hat_edit);

    // Inversion branch on the real image with a zero delta.
    ImageLossTerms<torch::Tensor> inv_terms;
    torch::Tensor x_hat;
    if (!tc.ablation.no_inv_loss) {
      inverter::Inversion res;
      {
        torch::NoGradGuard ng;
        res = inv->invert(g, x);
      }
      feature_editor::DeltaMap zero{torch::zeros_like(res.f_k.values), k, "zero", 0.0};
      auto f0 = h->forward(res.f_k, zero);
      x_hat = g->synthesize_from(f0, res.w.tail(k));
      inv_terms = image_terms(clf, x, x_hat);
      inv_terms.adv = objectives::adversarial_g(d->forward(x_hat));
    } else {
      auto z = torch::zeros({});
      inv_terms = {z, z, z, z};
    }
    auto loss = objectives::phase2_objective(edit_terms, inv_terms, tc.weights, !tc.ablation.no_inv_loss);
    opt_h.zero_grad();
    loss.backward();
    opt_h.step();

    double loss_d_value = 0.0;
    if (x_hat.defined()) {
      auto loss_d = objectives::adversarial_d(d->forward(x), d->forward(x_hat.detach()));
      opt_d.zero_grad();
      loss_d.backward();
      opt_d.step();
      loss_d_value = loss_d.item<double>();
    }

    auto br = objectives::compose_phase2(objectives::to_double(edit_terms), objectives::to_double(inv_terms),
                                         tc.weights, !tc.ablation.no_inv_loss);
    auto v = br.values;
    v["loss_d"] = loss_d_value;
    v["direction"] = chosen.front();
    check_finite(component::kEditor, step, v);
    log.append({component::kEditor, step, v});
    progress(opt, component::kEditor, step, total, v);
    if ((step + 1) % tc.checkpoint_interval == 0 && step + 1 < total) {
      save_bundle(ws, component::kEditor, step + 1, c, gen, tc.seed, {});
    }
  }

  TrainResult r;
  r.frozen["generator"] = {before["generator"], stylegen::parameter_checksum(*g)};
  r.frozen["inverter"] = {before["inverter"], stylegen::parameter_checksum(*inv)};
  if (e) r.frozen["encoder_e"] = {before["encoder_e"], stylegen::parameter_checksum(**e)};
  for (const auto& [name, sums] : r.frozen) {
    if (sums.first != sums.second) throw RuntimeFailure(name + " parameters changed during phase 2");
  }
  r.checkpoint = save_bundle(ws, component::kEditor, total, c, gen, tc.seed, {}, "adam", r.frozen);
  r.steps = total;
  return r;
}

// ---------------------------------------------------------------------------

directions::DirectionRegistry fit_directions(const Workspace& ws) {
  const auto& cfg = ws.config();
  auto g = ws.generator();
  auto clf = ws.classifier();
  auto e = ws.encoder_e();
  auto train = ws.train_set();
  const int m = std::min<int>(static_cast<int>(train.images.size(0)), 4 * cfg.directions.calibration_images);
  directions::RegistryBuildReport report;
  auto reg = directions::registry_build(g, clf, e, train.images.slice(0, 0, m), train.presence.slice(0, 0, m),
                                        cfg.directions, &report);
  reg.validate(g->num_layers(), cfg.generator.model.style_dim);
  const auto dir = ws.run() / "directions";
  fs::create_directories(dir);
  reg.save(dir / "registry.json");
  {
    std::ofstream f(dir / "fit_report.tsv");
    f << "direction\tprobe_heldout_accuracy\tcalibrated_power\n";
    for (const auto& [name, p] : report.calibrated_power) {
      auto it = report.probe_heldout_accuracy.find(name);
      f << name << "\t" << (it == report.probe_heldout_accuracy.end() ? std::nan("") : it->second) << "\t" << p << "\n";
    }
  }
  return reg;
}

// ---------------------------------------------------------------------------

config::RunConfig ablation_config(const std::string& name, const config::RunConfig& base, int k_small) {
  auto c = base;
  auto& a = c.train.ablation;
  if (name == "no_H") {
  } else if (name == "no_fuser") {
    a.no_fuser = true;
  } else if (name == "no_inv_loss") {
    a.no_inv_loss = true;
  } else if (name == "no_E") {
    a.no_E = true;
  } else if (name == "k_override") {
    a.k_override = k_small >= 0 ? k_small : std::max(1, base.effective_inverter().k - 2);
  } else if (name == "D_small") {
    a.D_small = true;
  } else {
    throw InvalidInput("unknown ablation '" + name + "'");
  }
  c.validate();
  return c;
}

fs::path ablation_run(const fs::path& main_run, const std::string& name) { return main_run / "ablations" / name; }

Workspace run_ablation(const std::string& name, const Workspace& main, const TrainOptions& opt) {
  auto cfg = ablation_config(name, main.config());
  Workspace ws(ablation_run(main.run(), name), cfg, main.run());
  fs::create_directories(ws.run());
  cfg.save(ws.run() / "config.json");
  TrainOptions o = opt;
  o.steps.reset();
  auto done = [&](const char* component, int steps) {
    auto p = checkpoint::latest(ws.run(), component);
    return p && checkpoint::read_meta(*p).step >= steps;
  };
  if (name == "no_fuser" || name == "k_override") {
    if (!done(component::kInverter, cfg.train.phase1_steps)) train_phase1(ws, o);
  }
  if (name != "no_H") {
    if (!done(component::kEditor, cfg.train.phase2_steps)) train_phase2(ws, o);
  }
  return ws;
}

}  // namespace sfe::trainer
