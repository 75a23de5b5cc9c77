#pragma once

// Editable W+ base encoder E: a strided residual backbone predicting a shared
// base style plus small per-layer offsets. Penalising the offsets keeps the
// prediction close to W, which is what makes its edits well behaved.

#include <cstdint>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/types.h>

#include "sfe/blocks.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::encoder_w {

struct BaseEncoderConfig {
  std::vector<int> backbone_channels = {32, 64, 96, 128};
  double editability_weight = 0.05;  // lambda_edit
  std::uint64_t init_seed = 21;

  int backbone_stages() const { return static_cast<int>(backbone_channels.size()); }
  void validate() const;
  friend bool operator==(const BaseEncoderConfig&, const BaseEncoderConfig&) = default;
};

struct BaseEncoding {
  stylegen::WPlusLatent w;  // w_base + offsets
  torch::Tensor offsets;    // [B, N, D]
};

class BaseEncoderImpl : public torch::nn::Module {
 public:
  BaseEncoderImpl(const BaseEncoderConfig& cfg, const stylegen::GeneratorConfig& gcfg,
                  const torch::Tensor& w_mean);

  BaseEncoding forward(const torch::Tensor& x);
  stylegen::WPlusLatent encode_wplus(const torch::Tensor& x) { return forward(x).w; }

  const BaseEncoderConfig& config() const { return cfg_; }

 private:
  BaseEncoderConfig cfg_;
  int num_layers_, style_dim_, resolution_;
  nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList stages_{nullptr};
  nn::Linear base_head_{nullptr};
  nn::Linear offset_head_{nullptr};
};
TORCH_MODULE(BaseEncoder);

/// Mean pairwise Euclidean distance between the N rows of each latent,
/// averaged over the batch. Lower means closer to a single W code.
double mean_row_spread(const stylegen::WPlusLatent& w);

}  // namespace sfe::encoder_w
