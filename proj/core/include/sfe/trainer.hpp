#pragma once

// Training loops: classifier, GAN pretraining, base encoder, inverter (phase
// 1), feature editor (phase 2), and ablation runs. Every loop resumes from the
// newest checkpoint of its component, draws all randomness from one seeded
// generator whose state is checkpointed, and logs one record per step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "sfe/direction.hpp"
#include "sfe/stylegen.hpp"
#include "sfe/workspace.hpp"

namespace sfe::trainer {

struct TrainOptions {
  std::optional<int> steps;  // total step target; config value when unset
  bool resume = true;
  int print_interval = 0;    // 0: silent
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::int64_t steps = 0;
  std::map<std::string, double> metrics;
  /// Parameter checksums of frozen components at start and end.
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> frozen;
};

TrainResult train_classifier(const Workspace& ws, const TrainOptions& opt = {});
TrainResult pretrain_gan(const Workspace& ws, const TrainOptions& opt = {});
TrainResult train_base_encoder(const Workspace& ws, const TrainOptions& opt = {});
TrainResult train_phase1(const Workspace& ws, const TrainOptions& opt = {});
TrainResult train_phase2(const Workspace& ws, const TrainOptions& opt = {});

/// Fits probes and PCA, calibrates powers with the base encoder and writes
/// the registry.
directions::DirectionRegistry fit_directions(const Workspace& ws);

struct EditPair {
  torch::Tensor x_e;        // G(w_E)
  torch::Tensor x_e_edit;   // G(w_E + displacement)
  feature_editor::DeltaMap delta;
  stylegen::WPlusLatent w_e, w_e_edit;
};

/// Synthetic training pair for one batch; `displacement` is [B, N, D] (or
/// [N, D], broadcast). Both images reuse the partial syntheses the delta is
/// taken from.
EditPair make_edit_pair(stylegen::Generator& g, const stylegen::WPlusLatent& w_e,
                        const torch::Tensor& displacement, int source_layer);

/// Per-sample uniform choice of direction and of one of its default powers;
/// returns the [B, N, D] displacement and the chosen direction indices.
std::pair<torch::Tensor, std::vector<int>> sample_edits(const std::vector<const directions::EditingDirection*>& dirs,
                                                        int batch, int num_layers, at::Generator& gen);

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"no_H", "no_fuser", "no_inv_loss", "no_E", "k_override", "D_small"};
  return names;
}

/// Config of an ablation derived from the main config.
config::RunConfig ablation_config(const std::string& name, const config::RunConfig& base, int k_small = -1);

/// Directory of an ablation run under the main run.
std::filesystem::path ablation_run(const std::filesystem::path& main_run, const std::string& name);

/// Trains what the ablation changes (reusing the main run for the rest) and
/// returns its workspace. "no_H" trains nothing.
Workspace run_ablation(const std::string& name, const Workspace& main, const TrainOptions& opt = {});

}  // namespace sfe::trainer
