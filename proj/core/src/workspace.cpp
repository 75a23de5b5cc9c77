#include "sfe/workspace.hpp"

#include <fstream>

#include <json.hpp>
#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace fs = std::filesystem;

namespace sfe {

namespace {

const char* producing_command(const std::string& c) {
  if (c == component::kClassifier) return "classifier train";
  if (c == component::kGenerator) return "gan train";
  if (c == component::kEncoderE) return "encoder-e train";
  if (c == component::kInverter) return "phase1 train";
  if (c == component::kEditor) return "phase2 train";
  return "?";
}

}  // namespace

void freeze(torch::nn::Module& m) {
  for (auto& p : m.parameters()) p.set_requires_grad(false);
  m.eval();
}

Workspace::Workspace(fs::path run, config::RunConfig cfg, std::optional<fs::path> base_run)
    : run_(std::move(run)), cfg_(std::move(cfg)), base_run_(std::move(base_run)) {
  cfg_.validate();
}

checkpoint::MetricsLog Workspace::metrics_log() const { return checkpoint::MetricsLog(run_ / "metrics.jsonl"); }

std::string Workspace::arch(const std::string& c) const {
  const auto g = cfg_.generator_config();
  nlohmann::ordered_json gen{{"style_dim", g.style_dim},       {"mapping_layers", g.mapping_layers},
                             {"resolution", g.image_resolution}, {"channel_base", g.channel_base},
                             {"channel_max", g.channel_max}};
  nlohmann::ordered_json j;
  if (c == component::kClassifier) {
    const auto cc = cfg_.classifier_config();
    j = {{"resolution", cc.image_resolution}, {"stage_channels", cc.stage_channels}, {"embedding_dim", cc.embedding_dim}};
  } else if (c == component::kGenerator) {
    j = gen;
  } else if (c == component::kEncoderE) {
    j = {{"generator", gen}, {"backbone_channels", cfg_.encoder_e.model.backbone_channels}};
  } else if (c == component::kInverter) {
    const auto inv = cfg_.effective_inverter();
    j = {{"generator", gen},
         {"k", inv.k},
         {"channels", inv.backbone_stage_channels},
         {"blocks", inv.stage_blocks},
         {"tap", inv.feature_tap_stage},
         {"fuser_blocks", inv.fuser_blocks},
         {"predictor_blocks", inv.predictor_blocks},
         {"no_fuser", inv.no_fuser}};
  } else if (c == component::kEditor) {
    const int k = cfg_.effective_inverter().k;
    j = {{"generator", gen},
         {"k", k},
         {"blocks", cfg_.feature_editor.blocks},
         {"source_layer", cfg_.feature_editor.source_layer(k)}};
  } else {
    throw InvalidInput("unknown component '" + c + "'");
  }
  return j.dump();
}

std::optional<fs::path> Workspace::find(const std::string& c) const {
  if (auto p = checkpoint::latest(run_, c)) return p;
  if (base_run_) return checkpoint::latest(*base_run_, c);
  return std::nullopt;
}

fs::path Workspace::require(const std::string& c) const {
  auto p = find(c);
  if (!p) {
    throw InvalidInput("missing " + c + " checkpoint under " + run_.string() + " (run `" + producing_command(c) +
                       "` first)");
  }
  return *p;
}

fs::path Workspace::data_dir() const {
  if (fs::exists(run_ / "data" / "train.jsonl") || !base_run_) return run_ / "data";
  return *base_run_ / "data";
}

void Workspace::build_data() const {
  const auto& d = cfg_.data;
  toyworld::Marginals m{d.glasses_marginal, d.accessory_marginal};
  const auto dir = run_ / "data";
  fs::create_directories(dir);
  toyworld::write_manifest(dir / "train.jsonl", toyworld::build_manifest(d.train_size, d.seed, toyworld::Split::train, m));
  toyworld::write_manifest(dir / "test.jsonl", toyworld::build_manifest(d.test_size, d.seed, toyworld::Split::test, m));
}

bool Workspace::has_data() const {
  return fs::exists(data_dir() / "train.jsonl") && fs::exists(data_dir() / "test.jsonl");
}

Dataset Workspace::load_split(toyworld::Split split, int limit) const {
  if (!has_data()) throw InvalidInput("missing dataset manifests under " + run_.string() + " (run `data build` first)");
  auto records = toyworld::read_manifest(data_dir() / (std::string(toyworld::split_name(split)) + ".jsonl"));
  if (limit >= 0 && static_cast<int>(records.size()) > limit) records.resize(static_cast<std::size_t>(limit));
  if (records.empty()) throw InvalidInput("dataset split is empty");
  Dataset ds;
  ds.samples = toyworld::render_manifest(records, cfg_.data.resolution);
  ds.images = toyworld::stack_pixels(ds.samples);
  ds.presence = toyworld::presence_labels(ds.samples);
  return ds;
}

Dataset Workspace::train_set() const { return load_split(toyworld::Split::train, -1); }
Dataset Workspace::test_set() const { return load_split(toyworld::Split::test, cfg_.eval.test_images); }

objectives::AttributeClassifier Workspace::classifier() const {
  objectives::AttributeClassifier net(cfg_.classifier_config());
  checkpoint::Contents c;
  c.modules = {{"classifier", net.ptr().get()}};
  checkpoint::load(require(component::kClassifier), c, arch(component::kClassifier));
  freeze(*net);
  return net;
}

stylegen::Generator Workspace::new_generator() const { return stylegen::Generator(cfg_.generator_config()); }

stylegen::Discriminator Workspace::new_discriminator() const {
  return stylegen::Discriminator(cfg_.discriminator_config());
}

stylegen::Generator Workspace::generator() const {
  auto g = new_generator();
  checkpoint::Contents c;
  c.modules = {{"generator_ema", g.ptr().get()}};
  checkpoint::load(require(component::kGenerator), c, arch(component::kGenerator));
  freeze(*g);
  return g;
}

stylegen::Discriminator Workspace::discriminator(const std::string& from_component) const {
  auto d = new_discriminator();
  checkpoint::Contents c;
  c.modules = {{"discriminator", d.ptr().get()}};
  checkpoint::load(require(from_component), c, arch(from_component));
  return d;
}

encoder_w::BaseEncoder Workspace::new_encoder_e(const torch::Tensor& w_mean) const {
  return encoder_w::BaseEncoder(cfg_.encoder_e.model, cfg_.generator_config(), w_mean);
}

encoder_w::BaseEncoder Workspace::encoder_e() const {
  auto e = new_encoder_e(torch::zeros({cfg_.generator.model.style_dim}));
  checkpoint::Contents c;
  c.modules = {{"encoder_e", e.ptr().get()}};
  checkpoint::load(require(component::kEncoderE), c, arch(component::kEncoderE));
  freeze(*e);
  return e;
}

inverter::Inverter Workspace::new_inverter(const torch::Tensor& w_mean) const {
  return inverter::Inverter(cfg_.effective_inverter(), cfg_.generator_config(), w_mean);
}

inverter::Inverter Workspace::inverter() const {
  auto inv = new_inverter(torch::zeros({cfg_.generator.model.style_dim}));
  checkpoint::Contents c;
  c.modules = {{"inverter", inv.ptr().get()}};
  checkpoint::load(require(component::kInverter), c, arch(component::kInverter));
  freeze(*inv);
  return inv;
}

feature_editor::FeatureEditor Workspace::new_editor() const {
  return feature_editor::FeatureEditor(cfg_.feature_editor, cfg_.generator_config(), cfg_.effective_inverter().k);
}

feature_editor::FeatureEditor Workspace::editor() const {
  auto h = new_editor();
  checkpoint::Contents c;
  c.modules = {{"editor", h.ptr().get()}};
  checkpoint::load(require(component::kEditor), c, arch(component::kEditor));
  freeze(*h);
  return h;
}

fs::path Workspace::registry_path() const {
  const auto here = run_ / "directions" / "registry.json";
  if (fs::exists(here) || !base_run_) return here;
  return *base_run_ / "directions" / "registry.json";
}

directions::DirectionRegistry Workspace::registry() const {
  const auto p = registry_path();
  if (!fs::exists(p)) throw InvalidInput("missing direction registry " + p.string() + " (run `directions fit` first)");
  auto r = directions::DirectionRegistry::load(p);
  r.validate(cfg_.generator_config().num_layers(), cfg_.generator.model.style_dim);
  return r;
}

feature_editor::SfePipeline Workspace::pipeline(feature_editor::PipelineMode mode) const {
  using feature_editor::PipelineMode;
  encoder_w::BaseEncoder e{nullptr};
  feature_editor::FeatureEditor h{nullptr};
  if (mode == PipelineMode::full) e = encoder_e();
  if (mode != PipelineMode::no_H) h = editor();
  return feature_editor::SfePipeline(generator(), inverter(), e, h, mode);
}

}  // namespace sfe
