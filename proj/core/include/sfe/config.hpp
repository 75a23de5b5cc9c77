#pragma once

// Run configuration: one JSON document with the sections data, generator,
// encoder_e, inverter, feature_editor, directions, train and eval. Every key
// has a default; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "sfe/classifier.hpp"
#include "sfe/directions.hpp"
#include "sfe/encoder_w.hpp"
#include "sfe/feature_editor.hpp"
#include "sfe/inverter.hpp"
#include "sfe/objectives.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::config {

struct DataConfig {
  int resolution = 64;
  int train_size = 4000;
  int test_size = 400;
  std::uint64_t seed = 1;
  double glasses_marginal = 0.5;
  double accessory_marginal = 0.5;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct GanTrainConfig {
  int steps = 8000;
  int batch_size = 16;
  double lr = 2e-3;
  double r1_gamma = 10.0;
  int r1_interval = 4;
  double ema_decay = 0.995;
  int w_mean_samples = 100000;
  double fid_threshold = 25.0;
  std::uint64_t seed = 101;
  friend bool operator==(const GanTrainConfig&, const GanTrainConfig&) = default;
};

struct GeneratorSection {
  stylegen::GeneratorConfig model;
  GanTrainConfig train;
  friend bool operator==(const GeneratorSection&, const GeneratorSection&) = default;
};

struct EncoderESection {
  encoder_w::BaseEncoderConfig model;
  int steps = 3000;
  int batch_size = 8;
  double lr = 5e-4;
  std::uint64_t seed = 111;
  friend bool operator==(const EncoderESection&, const EncoderESection&) = default;
};

struct AblationFlags {
  bool no_fuser = false;
  bool no_inv_loss = false;
  bool no_E = false;
  int k_override = -1;  // -1: keep inverter.k
  bool D_small = false;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainConfig {
  int batch_size = 8;
  double lr_main = 2e-4;
  double lr_disc = 1e-4;
  int phase1_steps = 6000;
  int phase2_steps = 3000;
  int adv_start_step = 2000;
  objectives::LossWeights weights;
  double w_pair_scale = 1.0;
  bool reset_discriminator = false;
  AblationFlags ablation;
  int log_interval = 50;
  int checkpoint_interval = 1000;
  std::uint64_t seed = 61;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalConfig {
  objectives::ClassifierConfig classifier;
  objectives::ClassifierTrainConfig classifier_train;
  int test_images = 400;
  int timing_images = 16;
  int timing_repeats = 5;
  int grid_images = 6;
  std::uint64_t seed = 71;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
  DataConfig data;
  GeneratorSection generator;
  EncoderESection encoder_e;
  inverter::InverterConfig inverter;
  feature_editor::FeatureEditorConfig feature_editor;
  directions::RegistryBuildConfig directions;
  TrainConfig train;
  EvalConfig eval;

  /// Cross-section checks (resolutions agree, splice layer valid, ...).
  void validate() const;

  /// Model configs with the data resolution filled in.
  stylegen::GeneratorConfig generator_config() const;
  stylegen::DiscriminatorConfig discriminator_config() const;
  objectives::ClassifierConfig classifier_config() const;

  /// Inverter config with ablation overrides applied.
  inverter::InverterConfig effective_inverter() const;

  std::string to_json() const;  // canonical, all keys
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// FNV-1a of the canonical JSON.
  std::uint64_t hash() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

}  // namespace sfe::config
