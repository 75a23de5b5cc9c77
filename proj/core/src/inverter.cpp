#include "sfe/inverter.hpp"

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::inverter {

void InverterConfig::validate(const stylegen::GeneratorConfig& g) const {
  const int n = g.num_layers();
  if (k < 0 || k >= n) {
    throw InvalidInput("inverter.k must be in [0, " + std::to_string(n) + ")");
  }
  if (backbone_stage_channels.size() != 4 || stage_blocks.size() != 4) {
    throw InvalidInput("inverter backbone needs exactly 4 stages");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (backbone_stage_channels[i] <= 0 || stage_blocks[i] <= 0) {
      throw InvalidInput("inverter stage channels and block counts must be positive");
    }
  }
  if (feature_tap_stage < 1 || feature_tap_stage > 4) throw InvalidInput("inverter.feature_tap_stage must be in [1, 4]");
  if (fuser_blocks < 1 || predictor_blocks < 1) throw InvalidInput("inverter block counts must be positive");
  const auto res = stage_resolutions(g.image_resolution);
  const int want = stylegen::GeneratorConfig::layer_resolution(k);
  if (res[static_cast<std::size_t>(feature_tap_stage - 1)] != want) {
    throw InvalidInput("tapped backbone stage resolution " +
                       std::to_string(res[static_cast<std::size_t>(feature_tap_stage - 1)]) +
                       " does not match layer " + std::to_string(k) + " resolution " + std::to_string(want));
  }
}

std::vector<int> InverterConfig::stage_strides(int input_resolution) const {
  const int target = stylegen::GeneratorConfig::layer_resolution(k);
  std::vector<int> strides;
  int res = input_resolution;
  for (int i = 0; i < 4; ++i) {
    const bool before_or_at_tap = i < feature_tap_stage;
    const int s = before_or_at_tap ? (res > target ? 2 : 1) : 2;
    strides.push_back(s);
    res /= s;
  }
  return strides;
}

std::vector<int> InverterConfig::stage_resolutions(int input_resolution) const {
  std::vector<int> out;
  int res = input_resolution;
  for (int s : stage_strides(input_resolution)) {
    res = std::max(1, res / s);
    out.push_back(res);
  }
  return out;
}

int InverterConfig::depth_to_tap() const {
  int depth = 1;  // stem
  for (int i = 0; i < feature_tap_stage; ++i) depth += 2 * stage_blocks[static_cast<std::size_t>(i)];
  return depth;
}

InverterImpl::InverterImpl(const InverterConfig& cfg, const stylegen::GeneratorConfig& gcfg,
                           const torch::Tensor& w_mean)
    : cfg_(cfg), gcfg_(gcfg) {
  cfg_.validate(gcfg_);
  auto gen = nn::make_generator(cfg_.init_seed);
  const auto& ch = cfg_.backbone_stage_channels;
  stem_ = register_module("stem", nn::Conv2d(3, ch[0], 3, 1, gen));
  stages_ = register_module("stages", torch::nn::ModuleList());
  const auto strides = cfg_.stage_strides(gcfg_.image_resolution);
  int cin = ch[0];
  int pooled = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    auto stage = torch::nn::Sequential();
    for (int b = 0; b < cfg_.stage_blocks[i]; ++b) {
      stage->push_back(nn::ResidualBlock(b == 0 ? cin : ch[i], ch[i], b == 0 ? strides[i] : 1, gen));
    }
    stages_->push_back(stage);
    cin = ch[i];
    pooled += ch[i];
  }

  const int n = gcfg_.num_layers();
  const int d = gcfg_.style_dim;
  w_head_ = register_module("w_head", nn::Linear(pooled, n * d, gen, 0.1));
  {
    torch::NoGradGuard ng;
    w_head_->bias().copy_(w_mean.reshape({1, d}).expand({n, d}).reshape({n * d}));
  }

  const int tap_c = ch[static_cast<std::size_t>(cfg_.feature_tap_stage - 1)];
  const int fc = gcfg_.feature_channels(cfg_.k);
  predictor_ = register_module("predictor", torch::nn::ModuleList());
  for (int b = 0; b < cfg_.predictor_blocks; ++b) predictor_->push_back(nn::ResidualBlock(tap_c, tap_c, 1, gen));
  predictor_out_ = register_module("predictor_out", nn::Conv2d(tap_c, fc, 1, 1, gen));

  fuser_ = register_module("fuser", nn::ResidualStack(2 * fc, fc, cfg_.fuser_blocks, gen));
  fuser_->init_passthrough({0.5, 0.5});
}

std::vector<torch::Tensor> InverterImpl::backbone_features(const torch::Tensor& x) {
  const int r = gcfg_.image_resolution;
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != r || x.size(3) != r) {
    throw InvalidInput("inverter expects images of shape [B, 3, " + std::to_string(r) + ", " +
                       std::to_string(r) + "]");
  }
  auto h = nn::leaky_relu(stem_->forward(x));
  std::vector<torch::Tensor> out;
  for (const auto& s : *stages_) {
    h = s->as<torch::nn::SequentialImpl>()->forward(h);
    out.push_back(h);
  }
  return out;
}

stylegen::WPlusLatent InverterImpl::predict_wplus(const std::vector<torch::Tensor>& features) {
  if (features.size() != 4) throw InvalidInput("predict_wplus expects 4 stage maps");
  std::vector<torch::Tensor> pooled;
  for (const auto& f : features) pooled.push_back(f.mean({2, 3}));
  auto flat = w_head_->forward(torch::cat(pooled, 1));
  return {flat.view({-1, gcfg_.num_layers(), gcfg_.style_dim})};
}

stylegen::FeatureTensor InverterImpl::predict_feature(const torch::Tensor& tapped) {
  const int s = stylegen::GeneratorConfig::layer_resolution(cfg_.k);
  if (tapped.dim() != 4 || tapped.size(2) != s || tapped.size(3) != s) {
    throw InvalidInput("feature predictor input must be at resolution " + std::to_string(s));
  }
  auto h = tapped;
  for (const auto& b : *predictor_) h = b->as<nn::ResidualBlockImpl>()->forward(h);
  return {predictor_out_->forward(h), cfg_.k};
}

stylegen::FeatureTensor InverterImpl::fuse(const stylegen::FeatureTensor& f_pred,
                                           const stylegen::FeatureTensor& f_w) {
  if (f_pred.layer_index != f_w.layer_index || !f_pred.values.sizes().equals(f_w.values.sizes())) {
    throw InvalidInput("fuse needs tensors of the same layer and shape");
  }
  if (cfg_.no_fuser) return f_pred;
  return {fuser_->forward(torch::cat({f_pred.values, f_w.values}, 1)), f_pred.layer_index};
}

Inversion InverterImpl::invert(stylegen::Generator& g, const torch::Tensor& x) {
  auto feats = backbone_features(x);
  Inversion out;
  out.w = predict_wplus(feats);
  out.f_pred = predict_feature(feats[static_cast<std::size_t>(cfg_.feature_tap_stage - 1)]);
  out.f_w = g->synthesize_partial(out.w, cfg_.k);
  out.f_k = fuse(out.f_pred, out.f_w);
  return out;
}

}  // namespace sfe::inverter
