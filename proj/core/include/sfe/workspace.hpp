#pragma once

// A run directory and the artifacts in it. Loaders raise InvalidInput when a
// prerequisite has not been produced yet, naming the command that makes it.
//
// An ablation run points at a base run: components it has not trained itself
// are taken from there.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "sfe/checkpoint.hpp"
#include "sfe/classifier.hpp"
#include "sfe/config.hpp"
#include "sfe/directions.hpp"
#include "sfe/encoder_w.hpp"
#include "sfe/feature_editor.hpp"
#include "sfe/inverter.hpp"
#include "sfe/stylegen.hpp"
#include "sfe/toyworld.hpp"

namespace sfe {

namespace component {
inline constexpr const char* kClassifier = "classifier";
inline constexpr const char* kGenerator = "generator";
inline constexpr const char* kEncoderE = "encoder_e";
inline constexpr const char* kInverter = "inverter";
inline constexpr const char* kEditor = "editor";
}  // namespace component

struct Dataset {
  torch::Tensor images;    // [n, 3, R, R]
  torch::Tensor presence;  // [n, kNumAttributes]
  std::vector<toyworld::LabeledImage> samples;
};

class Workspace {
 public:
  Workspace(std::filesystem::path run, config::RunConfig cfg,
            std::optional<std::filesystem::path> base_run = std::nullopt);

  const std::filesystem::path& run() const { return run_; }
  const config::RunConfig& config() const { return cfg_; }
  checkpoint::MetricsLog metrics_log() const;

  /// Architecture fingerprints stored in checkpoints.
  std::string arch(const std::string& component) const;

  /// Newest bundle of a component here, else in the base run.
  std::optional<std::filesystem::path> find(const std::string& component) const;
  std::filesystem::path require(const std::string& component) const;

  // data
  void build_data() const;
  bool has_data() const;
  Dataset train_set() const;
  Dataset test_set() const;  // first eval.test_images records

  // trained artifacts, in eval mode
  objectives::AttributeClassifier classifier() const;
  stylegen::Generator generator() const;  // EMA weights with w_mean
  stylegen::Discriminator discriminator(const std::string& from_component) const;
  encoder_w::BaseEncoder encoder_e() const;
  inverter::Inverter inverter() const;
  feature_editor::FeatureEditor editor() const;
  std::filesystem::path registry_path() const;
  directions::DirectionRegistry registry() const;

  // fresh modules
  stylegen::Generator new_generator() const;
  stylegen::Discriminator new_discriminator() const;
  encoder_w::BaseEncoder new_encoder_e(const torch::Tensor& w_mean) const;
  inverter::Inverter new_inverter(const torch::Tensor& w_mean) const;
  feature_editor::FeatureEditor new_editor() const;

  feature_editor::SfePipeline pipeline(feature_editor::PipelineMode mode) const;

 private:
  Dataset load_split(toyworld::Split split, int limit) const;
  std::filesystem::path data_dir() const;

  std::filesystem::path run_;
  config::RunConfig cfg_;
  std::optional<std::filesystem::path> base_run_;
};

void freeze(torch::nn::Module& m);

}  // namespace sfe
