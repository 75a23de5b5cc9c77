#pragma once

// Shared convolutional building blocks. All initialisation draws from an
// explicit generator so that every network is a pure function of its seed.

#include <cstdint>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/nn/module.h>
#include <torch/nn/modules/activation.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/types.h>

namespace sfe::nn {

at::Generator make_generator(std::uint64_t seed);

/// N(0, std^2) sample from an explicit generator.
torch::Tensor normal(at::IntArrayRef shape, double std, at::Generator& gen);

class Conv2dImpl : public torch::nn::Module {
 public:
  /// He-normal weights scaled by init_scale; zero bias.
  Conv2dImpl(int in_channels, int out_channels, int kernel, int stride, at::Generator& gen,
             double init_scale = 1.0, bool bias = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor& weight() { return weight_; }
  torch::Tensor& bias() { return bias_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int stride() const { return stride_; }

 private:
  int in_channels_, out_channels_, kernel_, stride_;
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(Conv2d);

class LinearImpl : public torch::nn::Module {
 public:
  LinearImpl(int in_features, int out_features, at::Generator& gen, double init_scale = 1.0);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor& weight() { return weight_; }
  torch::Tensor& bias() { return bias_; }

 private:
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(Linear);

/// Improved-ResNet style layer without batch statistics:
///   y = shortcut(x) + conv3x3_s(prelu(conv3x3(x)))
/// The shortcut is the identity when shapes allow, else a strided 1x1
/// convolution. The second convolution starts small so a fresh block is
/// close to its shortcut.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels, int stride, at::Generator& gen,
                    double residual_init_scale = 0.1);
  torch::Tensor forward(const torch::Tensor& x);

  bool has_projection() const { return !projection_.is_empty(); }
  Conv2d projection() const { return projection_; }

 private:
  Conv2d conv1_{nullptr}, conv2_{nullptr}, projection_{nullptr};
  torch::nn::PReLU act_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// `blocks` residual layers at constant resolution; the first maps
/// in_channels -> out_channels through a 1x1 projection skip when they differ.
/// This is the body shared by the Fuser and the Feature Editor.
class ResidualStackImpl : public torch::nn::Module {
 public:
  ResidualStackImpl(int in_channels, int out_channels, int blocks, at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& x);

  int blocks() const { return static_cast<int>(blocks_->size()); }
  ResidualBlock block(int i) const {
    return ResidualBlock(blocks_->ptr<ResidualBlockImpl>(static_cast<std::size_t>(i)));
  }

  /// Sets the first projection to route chosen input channel groups straight
  /// through: out[c] = sum_g scales[g] * in[g * out_channels + c].
  void init_passthrough(const std::vector<double>& scales);

 private:
  torch::nn::ModuleList blocks_{nullptr};
};
TORCH_MODULE(ResidualStack);

inline torch::Tensor leaky_relu(const torch::Tensor& x) {
  return torch::leaky_relu(x, 0.2);
}

}  // namespace sfe::nn
