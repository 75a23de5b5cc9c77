#pragma once

// Inverter: a residual backbone whose four stage outputs feed linear W+
// heads, whose tapped stage feeds a feature predictor, and a Fuser that
// merges the predicted layer-k tensor with the generator's own layer-k output
// for the predicted styles.

#include <cstdint>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/types.h>

#include "sfe/blocks.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::inverter {

struct InverterConfig {
  int k = 5;
  std::vector<int> backbone_stage_channels = {32, 48, 64, 96};
  std::vector<int> stage_blocks = {2, 2, 2, 1};
  int feature_tap_stage = 3;  // 1-based
  int fuser_blocks = 6;
  int predictor_blocks = 2;
  bool no_fuser = false;
  std::uint64_t init_seed = 31;

  void validate(const stylegen::GeneratorConfig& g) const;
  /// Stride of each stage for a given input resolution: 2 until the tapped
  /// stage reaches the layer-k resolution, 1 at the tap once it is reached,
  /// 2 after the tap.
  std::vector<int> stage_strides(int input_resolution) const;
  std::vector<int> stage_resolutions(int input_resolution) const;
  /// Convolutions from the input to the tapped stage output.
  int depth_to_tap() const;

  friend bool operator==(const InverterConfig&, const InverterConfig&) = default;
};

struct Inversion {
  stylegen::WPlusLatent w;
  stylegen::FeatureTensor f_k;
  stylegen::FeatureTensor f_pred;
  stylegen::FeatureTensor f_w;
};

class InverterImpl : public torch::nn::Module {
 public:
  InverterImpl(const InverterConfig& cfg, const stylegen::GeneratorConfig& gcfg,
               const torch::Tensor& w_mean);

  std::vector<torch::Tensor> backbone_features(const torch::Tensor& x);
  stylegen::WPlusLatent predict_wplus(const std::vector<torch::Tensor>& features);
  stylegen::FeatureTensor predict_feature(const torch::Tensor& tapped);
  stylegen::FeatureTensor fuse(const stylegen::FeatureTensor& f_pred, const stylegen::FeatureTensor& f_w);

  /// Full inversion; F_w comes from G.synthesize_partial(w, k).
  Inversion invert(stylegen::Generator& g, const torch::Tensor& x);

  const InverterConfig& config() const { return cfg_; }
  int k() const { return cfg_.k; }

 private:
  InverterConfig cfg_;
  stylegen::GeneratorConfig gcfg_;
  nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList stages_{nullptr};
  nn::Linear w_head_{nullptr};
  torch::nn::ModuleList predictor_{nullptr};
  nn::Conv2d predictor_out_{nullptr};
  nn::ResidualStack fuser_{nullptr};
};
TORCH_MODULE(Inverter);

}  // namespace sfe::inverter
