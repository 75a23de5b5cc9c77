#include "sfe/blocks.hpp"

#include <cmath>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::nn {

at::Generator make_generator(std::uint64_t seed) {
  return at::detail::createCPUGenerator(seed);
}

torch::Tensor normal(at::IntArrayRef shape, double std, at::Generator& gen) {
  return torch::randn(shape, gen) * std;
}

Conv2dImpl::Conv2dImpl(int in_channels, int out_channels, int kernel, int stride,
                       at::Generator& gen, double init_scale, bool bias)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride) {
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  weight_ = register_parameter(
      "weight", normal({out_channels, in_channels, kernel, kernel},
                       init_scale * std::sqrt(2.0 / fan_in), gen));
  if (bias) bias_ = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor Conv2dImpl::forward(const torch::Tensor& x) {
  return torch::conv2d(x, weight_, bias_, stride_, kernel_ / 2);
}

LinearImpl::LinearImpl(int in_features, int out_features, at::Generator& gen, double init_scale) {
  weight_ = register_parameter(
      "weight", normal({out_features, in_features}, init_scale / std::sqrt(in_features), gen));
  bias_ = register_parameter("bias", torch::zeros({out_features}));
}

torch::Tensor LinearImpl::forward(const torch::Tensor& x) {
  return torch::linear(x, weight_, bias_);
}

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, int stride,
                                     at::Generator& gen, double residual_init_scale) {
  conv1_ = register_module("conv1", Conv2d(in_channels, out_channels, 3, 1, gen));
  act_ = register_module("act", torch::nn::PReLU(torch::nn::PReLUOptions().num_parameters(out_channels)));
  conv2_ = register_module("conv2",
                           Conv2d(out_channels, out_channels, 3, stride, gen, residual_init_scale));
  if (in_channels != out_channels || stride != 1) {
    projection_ = register_module("projection", Conv2d(in_channels, out_channels, 1, stride, gen));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto shortcut = projection_.is_empty() ? x : projection_->forward(x);
  return shortcut + conv2_->forward(act_->forward(conv1_->forward(x)));
}

ResidualStackImpl::ResidualStackImpl(int in_channels, int out_channels, int blocks,
                                     at::Generator& gen) {
  if (blocks < 1) throw InvalidInput("residual stack needs at least one block");
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < blocks; ++i) {
    blocks_->push_back(ResidualBlock(i == 0 ? in_channels : out_channels, out_channels, 1, gen));
  }
}

torch::Tensor ResidualStackImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (const auto& b : *blocks_) h = b->as<ResidualBlockImpl>()->forward(h);
  return h;
}

void ResidualStackImpl::init_passthrough(const std::vector<double>& scales) {
  auto first = block(0);
  if (!first->has_projection()) return;
  auto proj = first->projection();
  const auto out_c = proj->out_channels();
  if (static_cast<int>(scales.size()) * out_c != proj->in_channels()) {
    throw InvalidInput("passthrough groups do not tile the projection input");
  }
  torch::NoGradGuard ng;
  proj->weight().zero_();
  auto eye = torch::eye(out_c).view({out_c, out_c, 1, 1});
  for (std::size_t g = 0; g < scales.size(); ++g) {
    const auto lo = static_cast<long>(g) * out_c;
    proj->weight().slice(1, lo, lo + out_c).copy_(eye * scales[g]);
  }
}

}  // namespace sfe::nn
