#include "sfe/encoder_w.hpp"

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::encoder_w {

void BaseEncoderConfig::validate() const {
  if (backbone_channels.empty()) throw InvalidInput("encoder_e.backbone_channels must not be empty");
  for (int c : backbone_channels) {
    if (c <= 0) throw InvalidInput("encoder_e.backbone_channels must be positive");
  }
  if (!(editability_weight >= 0.0)) throw InvalidInput("encoder_e.lambda_edit must be >= 0");
}

BaseEncoderImpl::BaseEncoderImpl(const BaseEncoderConfig& cfg, const stylegen::GeneratorConfig& gcfg,
                                 const torch::Tensor& w_mean)
    : cfg_(cfg),
      num_layers_(gcfg.num_layers()),
      style_dim_(gcfg.style_dim),
      resolution_(gcfg.image_resolution) {
  cfg_.validate();
  auto gen = nn::make_generator(cfg_.init_seed);
  stem_ = register_module("stem", nn::Conv2d(3, cfg_.backbone_channels[0], 3, 1, gen));
  stages_ = register_module("stages", torch::nn::ModuleList());
  int cin = cfg_.backbone_channels[0];
  int pooled = 0;
  for (int c : cfg_.backbone_channels) {
    stages_->push_back(nn::ResidualBlock(cin, c, 2, gen));
    cin = c;
    pooled += c;
  }
  base_head_ = register_module("base_head", nn::Linear(pooled, style_dim_, gen, 0.1));
  offset_head_ = register_module("offset_head", nn::Linear(pooled, num_layers_ * style_dim_, gen, 0.01));
  torch::NoGradGuard ng;
  base_head_->bias().copy_(w_mean.reshape({style_dim_}));
}

BaseEncoding BaseEncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != resolution_ || x.size(3) != resolution_) {
    throw InvalidInput("encoder expects images of shape [B, 3, " + std::to_string(resolution_) + ", " +
                       std::to_string(resolution_) + "]");
  }
  auto h = nn::leaky_relu(stem_->forward(x));
  std::vector<torch::Tensor> pooled;
  for (const auto& s : *stages_) {
    h = s->as<nn::ResidualBlockImpl>()->forward(h);
    pooled.push_back(h.mean({2, 3}));
  }
  auto feat = torch::cat(pooled, 1);
  auto base = base_head_->forward(feat);
  auto offsets = offset_head_->forward(feat).view({-1, num_layers_, style_dim_});
  return {{base.unsqueeze(1) + offsets}, offsets};
}

double mean_row_spread(const stylegen::WPlusLatent& w) {
  auto rows = w.rows.to(torch::kFloat64);
  auto d = torch::cdist(rows, rows);  // [B, N, N]
  const auto n = rows.size(1);
  if (n < 2) return 0.0;
  return (d.sum({1, 2}) / static_cast<double>(n * (n - 1))).mean().item<double>();
}

}  // namespace sfe::encoder_w
