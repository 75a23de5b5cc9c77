#include "sfe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sfe/errors.hpp"
#include "sfe/random.hpp"

namespace sfe::config {

namespace {

using Json = nlohmann::ordered_json;

// Reads keys from a JSON object, remembering which ones were consumed so
// leftovers can be reported.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidInput("config section '" + path_ + "' must be an object");
  }

  template <class T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidInput("config key '" + path_ + "." + key + "' has the wrong type");
    }
  }

  template <class F>
  void section(const char* key, F&& visit) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), path_ + "." + key);
    visit(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw InvalidInput("unknown config key '" + path_ + "." + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(Json& j) : j_(j) { j_ = Json::object(); }

  template <class T>
  void operator()(const char* key, T& value) {
    j_[key] = value;
  }

  template <class F>
  void section(const char* key, F&& visit) {
    Json sub;
    Writer w(sub);
    visit(w);
    j_[key] = sub;
  }

 private:
  Json& j_;
};

template <class V>
void visit(V& v, DataConfig& c) {
  v("resolution", c.resolution);
  v("train_size", c.train_size);
  v("test_size", c.test_size);
  v("seed", c.seed);
  v("glasses_marginal", c.glasses_marginal);
  v("accessory_marginal", c.accessory_marginal);
}

template <class V>
void visit(V& v, GeneratorSection& c) {
  v("style_dim", c.model.style_dim);
  v("mapping_layers", c.model.mapping_layers);
  v("channel_base", c.model.channel_base);
  v("channel_max", c.model.channel_max);
  v("init_seed", c.model.init_seed);
  v.section("train", [&](auto& s) {
    s("steps", c.train.steps);
    s("batch_size", c.train.batch_size);
    s("lr", c.train.lr);
    s("r1_gamma", c.train.r1_gamma);
    s("r1_interval", c.train.r1_interval);
    s("ema_decay", c.train.ema_decay);
    s("w_mean_samples", c.train.w_mean_samples);
    s("fid_threshold", c.train.fid_threshold);
    s("seed", c.train.seed);
  });
}

template <class V>
void visit(V& v, EncoderESection& c) {
  v("backbone_channels", c.model.backbone_channels);
  v("lambda_edit", c.model.editability_weight);
  v("init_seed", c.model.init_seed);
  v("steps", c.steps);
  v("batch_size", c.batch_size);
  v("lr", c.lr);
  v("seed", c.seed);
}

template <class V>
void visit(V& v, inverter::InverterConfig& c) {
  v("k", c.k);
  v("backbone_stage_channels", c.backbone_stage_channels);
  v("stage_blocks", c.stage_blocks);
  v("feature_tap_stage", c.feature_tap_stage);
  v("fuser_blocks", c.fuser_blocks);
  v("predictor_blocks", c.predictor_blocks);
  v("init_seed", c.init_seed);
}

template <class V>
void visit(V& v, feature_editor::FeatureEditorConfig& c) {
  v("blocks", c.blocks);
  v("delta_source_layer", c.delta_source_layer);
  v("init_seed", c.init_seed);
}

template <class V>
void visit(V& v, directions::RegistryBuildConfig& c) {
  v("probe_samples", c.probe_samples);
  v("pca_samples", c.pca_samples);
  v("pca_components", c.pca_components);
  v("small_set", c.small_set);
  v("holdout", c.holdout);
  v("calibration_images", c.calibration_images);
  v("seed", c.seed);
}

template <class V>
void visit(V& v, TrainConfig& c) {
  v("batch_size", c.batch_size);
  v("lr_main", c.lr_main);
  v("lr_disc", c.lr_disc);
  v("phase1_steps", c.phase1_steps);
  v("phase2_steps", c.phase2_steps);
  v("adv_start_step", c.adv_start_step);
  v.section("weights", [&](auto& s) {
    s("lpips", c.weights.lpips);
    s("id", c.weights.id);
    s("adv", c.weights.adv);
    s("reg", c.weights.reg);
  });
  v("w_pair_scale", c.w_pair_scale);
  v("reset_discriminator", c.reset_discriminator);
  v.section("ablation", [&](auto& s) {
    s("no_fuser", c.ablation.no_fuser);
    s("no_inv_loss", c.ablation.no_inv_loss);
    s("no_E", c.ablation.no_E);
    s("k_override", c.ablation.k_override);
    s("D_small", c.ablation.D_small);
  });
  v("log_interval", c.log_interval);
  v("checkpoint_interval", c.checkpoint_interval);
  v("seed", c.seed);
}

template <class V>
void visit(V& v, EvalConfig& c) {
  v.section("classifier", [&](auto& s) {
    s("stage_channels", c.classifier.stage_channels);
    s("embedding_dim", c.classifier.embedding_dim);
    s("init_seed", c.classifier.init_seed);
    s("steps", c.classifier_train.steps);
    s("batch_size", c.classifier_train.batch_size);
    s("lr", c.classifier_train.lr);
    s("seed", c.classifier_train.seed);
  });
  v("test_images", c.test_images);
  v("timing_images", c.timing_images);
  v("timing_repeats", c.timing_repeats);
  v("grid_images", c.grid_images);
  v("seed", c.seed);
}

template <class V>
void visit(V& v, RunConfig& c) {
  v.section("data", [&](auto& s) { visit(s, c.data); });
  v.section("generator", [&](auto& s) { visit(s, c.generator); });
  v.section("encoder_e", [&](auto& s) { visit(s, c.encoder_e); });
  v.section("inverter", [&](auto& s) { visit(s, c.inverter); });
  v.section("feature_editor", [&](auto& s) { visit(s, c.feature_editor); });
  v.section("directions", [&](auto& s) { visit(s, c.directions); });
  v.section("train", [&](auto& s) { visit(s, c.train); });
  v.section("eval", [&](auto& s) { visit(s, c.eval); });
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidInput("train.batch_size must be >= 1");
  if (!(lr_main > 0) || !(lr_disc > 0)) throw InvalidInput("train learning rates must be positive");
  if (phase1_steps < 0 || phase2_steps < 0) throw InvalidInput("train step counts must be >= 0");
  if (adv_start_step < 0 || (phase1_steps > 0 && adv_start_step >= phase1_steps)) {
    throw InvalidInput("train.adv_start_step must be in [0, phase1_steps)");
  }
  if (log_interval < 1 || checkpoint_interval < 1) throw InvalidInput("train intervals must be >= 1");
  if (!(w_pair_scale >= 0)) throw InvalidInput("train.w_pair_scale must be >= 0");
  weights.validate();
}

void RunConfig::validate() const {
  const auto& d = data;
  if (d.resolution < 32 || (d.resolution & (d.resolution - 1)) != 0) {
    throw InvalidInput("data.resolution must be a power of two >= 32");
  }
  if (d.train_size < 1 || d.test_size < 1) throw InvalidInput("data sizes must be >= 1");
  if (d.glasses_marginal < 0 || d.glasses_marginal > 1 || d.accessory_marginal < 0 || d.accessory_marginal > 1) {
    throw InvalidInput("data marginals must be in [0, 1]");
  }
  const auto g = generator_config();
  g.validate();
  const auto& gt = generator.train;
  if (gt.steps < 0 || gt.batch_size < 2 || !(gt.lr > 0) || gt.r1_interval < 1 || !(gt.r1_gamma >= 0) ||
      gt.ema_decay < 0 || gt.ema_decay >= 1 || gt.w_mean_samples < 1) {
    throw InvalidInput("generator.train has an invalid value");
  }
  encoder_e.model.validate();
  if (encoder_e.steps < 0 || encoder_e.batch_size < 1 || !(encoder_e.lr > 0)) {
    throw InvalidInput("encoder_e training settings are invalid");
  }
  const auto inv = effective_inverter();
  inv.validate(g);
  feature_editor.validate(g, inv.k);
  if (directions.probe_samples < 10 || directions.pca_samples < 2 || directions.pca_components < 1 ||
      directions.pca_components > g.style_dim) {
    throw InvalidInput("directions sample counts are invalid");
  }
  if (directions.small_set.size() != 6) throw InvalidInput("directions.small_set must name 6 directions");
  if (directions.holdout.size() < 2) throw InvalidInput("directions.holdout must name at least 2 directions");
  train.validate();
  if (eval.test_images < 1 || eval.test_images > d.test_size) {
    throw InvalidInput("eval.test_images must be in [1, data.test_size]");
  }
  if (eval.timing_images < 1 || eval.timing_repeats < 1 || eval.grid_images < 1) {
    throw InvalidInput("eval timing and grid sizes must be >= 1");
  }
}

stylegen::GeneratorConfig RunConfig::generator_config() const {
  auto g = generator.model;
  g.image_resolution = data.resolution;
  return g;
}

stylegen::DiscriminatorConfig RunConfig::discriminator_config() const {
  stylegen::DiscriminatorConfig d;
  d.image_resolution = data.resolution;
  d.channel_base = generator.model.channel_base;
  d.channel_max = generator.model.channel_max;
  d.init_seed = derive_seed(generator.model.init_seed, 1);
  return d;
}

objectives::ClassifierConfig RunConfig::classifier_config() const {
  auto c = eval.classifier;
  c.image_resolution = data.resolution;
  return c;
}

inverter::InverterConfig RunConfig::effective_inverter() const {
  auto inv = inverter;
  if (train.ablation.k_override >= 0) inv.k = train.ablation.k_override;
  inv.no_fuser = train.ablation.no_fuser;
  return inv;
}

std::string RunConfig::to_json() const {
  Json j;
  Writer w(j);
  auto copy = *this;
  visit(w, copy);
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "config");
  visit(r, c);
  r.finish();
  c.generator.model.image_resolution = c.data.resolution;
  c.eval.classifier.image_resolution = c.data.resolution;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << to_json();
}

std::uint64_t RunConfig::hash() const {
  const auto s = to_json();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace sfe::config
