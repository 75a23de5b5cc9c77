#pragma once

// Style-based generator with spliceable intermediate state, and its
// discriminator.
//
// Layer k runs at spatial resolution 4 * 2^(k/2); even layers k >= 2
// upsample first. Odd layers feed a per-resolution RGB head whose outputs are
// accumulated in a running skip image. Because that skip image is part of the
// synthesis state, a FeatureTensor packs it as the last three channels:
// values = [conv activations (C_k) | rgb skip (3)] at resolution S_k.
// Resuming from a FeatureTensor therefore reproduces full synthesis exactly.

#include <cstdint>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/types.h>

namespace sfe::stylegen {

struct GeneratorConfig {
  int style_dim = 128;
  int mapping_layers = 4;
  int image_resolution = 64;
  int channel_base = 1024;
  int channel_max = 64;
  std::uint64_t init_seed = 0;

  /// 2 * log2(R / 4) + 2 style-modulated layers.
  int num_layers() const;
  static int layer_resolution(int k) { return 4 << (k / 2); }
  int conv_channels(int k) const;
  /// Channel count of a FeatureTensor at layer k (activations + rgb skip).
  int feature_channels(int k) const { return conv_channels(k) + 3; }
  void validate() const;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Per-layer styles, batched: rows is [B, N, style_dim].
struct WPlusLatent {
  torch::Tensor rows;

  int num_layers() const { return static_cast<int>(rows.size(1)); }
  int batch() const { return static_cast<int>(rows.size(0)); }
  /// Layers [lo, hi) as a new latent.
  WPlusLatent slice(int lo, int hi) const { return {rows.slice(1, lo, hi)}; }
  WPlusLatent tail(int k) const { return slice(k + 1, num_layers()); }

  /// Repeats a [B, D] W-space code across n layers.
  static WPlusLatent broadcast(const torch::Tensor& w, int n);
};

/// Synthesis state after layer `layer_index`: [B, C_k + 3, S_k, S_k].
struct FeatureTensor {
  torch::Tensor values;
  int layer_index = 0;

  torch::Tensor activations() const;  // first C_k channels
  torch::Tensor rgb_skip() const;     // last 3 channels
};

/// Affine style projection + equalized-lr 2D convolution with optional
/// weight demodulation. Modulation is applied to activations rather than
/// to per-sample weights; the result is the same convolution.
class ModulatedConv2dImpl : public torch::nn::Module {
 public:
  ModulatedConv2dImpl(int in_channels, int out_channels, int kernel, int style_dim, bool demodulate);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  int in_channels_, out_channels_, kernel_;
  bool demodulate_;
  double weight_gain_;
  torch::Tensor weight_;
  torch::nn::Linear affine_{nullptr};
};
TORCH_MODULE(ModulatedConv2d);

class MappingNetworkImpl : public torch::nn::Module {
 public:
  MappingNetworkImpl(int style_dim, int layers);
  torch::Tensor forward(const torch::Tensor& z);

 private:
  std::vector<torch::Tensor> weights_, biases_;
  double gain_;
};
TORCH_MODULE(MappingNetwork);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const { return cfg_; }
  int num_layers() const { return cfg_.num_layers(); }

  /// z [B, D] -> w [B, D].
  torch::Tensor map_latent(const torch::Tensor& z);
  /// Full synthesis; image [B, 3, R, R] in [-1, 1].
  torch::Tensor synthesize(const WPlusLatent& w);
  /// Runs layers 0..k using rows 0..k.
  FeatureTensor synthesize_partial(const WPlusLatent& w, int k);
  /// Resumes from f using rows k+1..N-1 (w_tail has N-1-k rows).
  torch::Tensor synthesize_from(const FeatureTensor& f, const WPlusLatent& w_tail);

  /// Mean of map_latent over the prior, estimated after training.
  torch::Tensor w_mean() const { return w_mean_; }
  void set_w_mean(const torch::Tensor& m);

 private:
  torch::Tensor run_layer(int k, const torch::Tensor& x, const torch::Tensor& rgb,
                          const torch::Tensor& w, torch::Tensor* rgb_out);
  void check_latent(const WPlusLatent& w, int expected_rows) const;

  GeneratorConfig cfg_;
  MappingNetwork mapping_{nullptr};
  torch::Tensor const_input_;
  torch::nn::ModuleList convs_{nullptr};
  torch::nn::ModuleList to_rgb_{nullptr};  // one per odd layer
  std::vector<torch::Tensor> conv_bias_, noise_strength_, noise_;
  std::vector<torch::Tensor> rgb_bias_;
  torch::Tensor w_mean_;
};
TORCH_MODULE(Generator);

struct DiscriminatorConfig {
  int image_resolution = 64;
  int channel_base = 1024;
  int channel_max = 64;
  std::uint64_t init_seed = 1;
};

/// Residual strided convolutional critic: image [B, 3, R, R] -> score [B].
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  struct Block {
    torch::Tensor conv0, conv1, skip;
    torch::Tensor bias0, bias1;
  };
  DiscriminatorConfig cfg_;
  torch::Tensor from_rgb_w_, from_rgb_b_;
  std::vector<Block> blocks_;
  torch::Tensor fc_w_, fc_b_, out_w_, out_b_;
};
TORCH_MODULE(Discriminator);

/// Order-stable checksum over all parameters and buffers, used by the
/// freeze contracts.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

}  // namespace sfe::stylegen
