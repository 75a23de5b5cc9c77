#pragma once

// Small convolutional attribute classifier trained on toyworld labels. Its
// intermediate activations back the perceptual loss, its penultimate
// embedding backs the identity loss and toy-FID, and its logits label
// generated images for direction discovery and flip-rate evaluation.

#include <cstdint>
#include <vector>

#include <torch/nn/module.h>
#include <torch/types.h>

#include "sfe/blocks.hpp"
#include "sfe/toyworld.hpp"

namespace sfe::objectives {

struct ClassifierConfig {
  int image_resolution = 64;
  std::vector<int> stage_channels = {32, 64, 96, 128};
  int embedding_dim = 128;
  std::uint64_t init_seed = 11;

  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

struct ClassifierOutput {
  std::vector<torch::Tensor> stages;  // post-activation feature maps, one per stage
  torch::Tensor embedding;            // [B, embedding_dim]
  torch::Tensor logits;               // [B, kNumAttributes] presence logits
  torch::Tensor values;               // [B, kNumAttributes] regressed attribute values
};

class AttributeClassifierImpl : public torch::nn::Module {
 public:
  explicit AttributeClassifierImpl(const ClassifierConfig& cfg);
  ClassifierOutput forward(const torch::Tensor& images);
  const ClassifierConfig& config() const { return cfg_; }

  /// Presence probabilities [B, kNumAttributes].
  torch::Tensor presence_probability(const torch::Tensor& images);

 private:
  ClassifierConfig cfg_;
  std::vector<nn::Conv2d> stages_;
  nn::Linear embed_{nullptr};
  nn::Linear logits_{nullptr};
  nn::Linear values_{nullptr};
};
TORCH_MODULE(AttributeClassifier);

struct ClassifierTrainConfig {
  int steps = 1500;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 3;
  friend bool operator==(const ClassifierTrainConfig&, const ClassifierTrainConfig&) = default;
};

struct ClassifierReport {
  std::vector<double> test_accuracy;  // per attribute presence accuracy
  double final_loss = 0.0;
};

/// Trains on the given images with light blur/noise augmentation so that the
/// network transfers to generator samples; returns held-out accuracy.
ClassifierReport train_classifier(AttributeClassifier& net,
                                  std::span<const toyworld::LabeledImage> train,
                                  std::span<const toyworld::LabeledImage> test,
                                  const ClassifierTrainConfig& cfg);

}  // namespace sfe::objectives
