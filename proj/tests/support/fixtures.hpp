#pragma once

#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "sfe/config.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::tsupport {

/// Small generator used by structural tests: 32 px, N = 8.
inline stylegen::GeneratorConfig tiny_generator(std::uint64_t seed = 0) {
  stylegen::GeneratorConfig g;
  g.image_resolution = 32;
  g.style_dim = 16;
  g.mapping_layers = 2;
  g.channel_base = 128;
  g.channel_max = 16;
  g.init_seed = seed;
  return g;
}

/// Run config for tests that need whole components but only a few steps.
inline config::RunConfig tiny_run_config() {
  config::RunConfig c;
  c.data.resolution = 32;
  c.generator.model.image_resolution = 32;
  c.eval.classifier.image_resolution = 32;
  c.data.train_size = 64;
  c.data.test_size = 16;
  c.generator.model.style_dim = 16;
  c.generator.model.mapping_layers = 2;
  c.generator.model.channel_base = 128;
  c.generator.model.channel_max = 16;
  c.generator.train.steps = 4;
  c.generator.train.batch_size = 4;
  c.generator.train.w_mean_samples = 256;
  c.encoder_e.model.backbone_channels = {8, 8, 8, 8};
  c.encoder_e.steps = 3;
  c.encoder_e.batch_size = 2;
  c.inverter.backbone_stage_channels = {8, 8, 8, 8};
  c.inverter.stage_blocks = {1, 1, 1, 1};
  c.inverter.fuser_blocks = 1;
  c.inverter.predictor_blocks = 1;
  c.feature_editor.blocks = 1;
  c.directions.probe_samples = 64;
  c.directions.pca_samples = 64;
  c.directions.calibration_images = 8;
  c.train.batch_size = 2;
  c.train.phase1_steps = 4;
  c.train.phase2_steps = 4;
  c.train.adv_start_step = 2;
  c.train.log_interval = 1;
  c.train.checkpoint_interval = 2;
  c.eval.classifier.stage_channels = {8, 8, 8, 8};
  c.eval.classifier.embedding_dim = 16;
  c.eval.classifier_train.steps = 3;
  c.eval.classifier_train.batch_size = 8;
  c.eval.test_images = 16;
  c.eval.timing_images = 2;
  c.eval.timing_repeats = 2;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sfe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace sfe::tsupport
