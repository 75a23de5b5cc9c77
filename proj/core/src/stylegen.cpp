#include "sfe/stylegen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <torch/torch.h>

#include "sfe/blocks.hpp"
#include "sfe/errors.hpp"

namespace sfe::stylegen {
namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kMappingLrMul = 0.01;

int log2_exact(int x) {
  int n = 0;
  while ((1 << n) < x) ++n;
  return n;
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return torch::upsample_bilinear2d(x, {x.size(2) * 2, x.size(3) * 2}, /*align_corners=*/false);
}

torch::Tensor downsample2(const torch::Tensor& x) { return torch::avg_pool2d(x, 2); }

}  // namespace

int GeneratorConfig::num_layers() const { return 2 * (log2_exact(image_resolution) - 2) + 2; }

int GeneratorConfig::conv_channels(int k) const {
  return std::min(channel_max, channel_base / layer_resolution(k));
}

void GeneratorConfig::validate() const {
  if (image_resolution < 32 || (image_resolution & (image_resolution - 1)) != 0) {
    throw InvalidInput("generator image_resolution must be a power of two >= 32");
  }
  if (style_dim < 1 || mapping_layers < 1) throw InvalidInput("generator sizes must be positive");
  if (channel_base < image_resolution || channel_max < 1) {
    throw InvalidInput("generator channel_base/channel_max too small");
  }
}

WPlusLatent WPlusLatent::broadcast(const torch::Tensor& w, int n) {
  if (w.dim() != 2) throw InvalidInput("broadcast expects a [B, D] code");
  return {w.unsqueeze(1).expand({w.size(0), n, w.size(1)}).contiguous()};
}

torch::Tensor FeatureTensor::activations() const {
  return values.slice(1, 0, values.size(1) - 3).contiguous();
}

torch::Tensor FeatureTensor::rgb_skip() const {
  return values.slice(1, values.size(1) - 3, values.size(1)).contiguous();
}

// ---------------------------------------------------------------------------

ModulatedConv2dImpl::ModulatedConv2dImpl(int in_channels, int out_channels, int kernel,
                                         int style_dim, bool demodulate)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      demodulate_(demodulate),
      weight_gain_(1.0 / std::sqrt(static_cast<double>(in_channels) * kernel * kernel)) {
  weight_ = register_parameter("weight", torch::randn({out_channels, in_channels, kernel, kernel}));
  affine_ = register_module("affine", torch::nn::Linear(style_dim, in_channels));
  torch::NoGradGuard ng;
  affine_->weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(style_dim)));
  affine_->bias.fill_(1.0);
}

torch::Tensor ModulatedConv2dImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
  const auto batch = x.size(0);
  auto style = affine_->forward(w);  // [B, Cin]
  auto weight = weight_ * weight_gain_;
  auto y = torch::conv2d(x * style.view({batch, in_channels_, 1, 1}), weight, {}, 1, kernel_ / 2);
  if (demodulate_) {
    auto wsq = weight.pow(2).sum({2, 3});                                // [Cout, Cin]
    auto dcoef = torch::rsqrt(torch::mm(style.pow(2), wsq.t()) + 1e-8);  // [B, Cout]
    y = y * dcoef.view({batch, out_channels_, 1, 1});
  }
  return y;
}

MappingNetworkImpl::MappingNetworkImpl(int style_dim, int layers)
    : gain_(kMappingLrMul / std::sqrt(static_cast<double>(style_dim))) {
  for (int i = 0; i < layers; ++i) {
    weights_.push_back(register_parameter("weight" + std::to_string(i),
                                          torch::randn({style_dim, style_dim}) / kMappingLrMul));
    biases_.push_back(register_parameter("bias" + std::to_string(i), torch::zeros({style_dim})));
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) {
  auto x = z * torch::rsqrt(z.pow(2).mean(1, true) + 1e-8);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = torch::linear(x, weights_[i] * gain_, biases_[i] * kMappingLrMul);
    x = nn::leaky_relu(x) * kSqrt2;
  }
  return x;
}

// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // Layer modules take their initial values from the global generator; pin it
  // so construction is a pure function of init_seed.
  torch::manual_seed(cfg_.init_seed);
  auto gen = nn::make_generator(cfg_.init_seed ^ 0x5EEDULL);
  const int n = cfg_.num_layers();
  const int d = cfg_.style_dim;

  mapping_ = register_module("mapping", MappingNetwork(d, cfg_.mapping_layers));
  const_input_ = register_parameter("const", nn::normal({1, cfg_.conv_channels(0), 4, 4}, 1.0, gen));
  convs_ = register_module("convs", torch::nn::ModuleList());
  to_rgb_ = register_module("to_rgb", torch::nn::ModuleList());
  for (int k = 0; k < n; ++k) {
    const int res = GeneratorConfig::layer_resolution(k);
    const int cin = k == 0 ? cfg_.conv_channels(0) : cfg_.conv_channels(k - 1);
    const int cout = cfg_.conv_channels(k);
    convs_->push_back(ModulatedConv2d(cin, cout, 3, d, true));
    conv_bias_.push_back(register_parameter("conv_bias" + std::to_string(k), torch::zeros({cout})));
    noise_strength_.push_back(
        register_parameter("noise_strength" + std::to_string(k), torch::zeros({1})));
    noise_.push_back(register_buffer("noise" + std::to_string(k), nn::normal({1, 1, res, res}, 1.0, gen)));
    if (k % 2 == 1) {
      to_rgb_->push_back(ModulatedConv2d(cout, 3, 1, d, false));
      rgb_bias_.push_back(register_parameter("rgb_bias" + std::to_string(k), torch::zeros({3})));
    }
  }
  w_mean_ = register_buffer("w_mean", torch::zeros({d}));
}

void GeneratorImpl::set_w_mean(const torch::Tensor& m) {
  torch::NoGradGuard ng;
  w_mean_.copy_(m.reshape({cfg_.style_dim}));
}

torch::Tensor GeneratorImpl::map_latent(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != cfg_.style_dim) {
    throw InvalidInput("map_latent expects [B, " + std::to_string(cfg_.style_dim) + "]");
  }
  return mapping_->forward(z);
}

void GeneratorImpl::check_latent(const WPlusLatent& w, int expected_rows) const {
  if (!w.rows.defined() || w.rows.dim() != 3 || w.rows.size(1) != expected_rows ||
      w.rows.size(2) != cfg_.style_dim) {
    throw InvalidInput("latent must be [B, " + std::to_string(expected_rows) + ", " +
                       std::to_string(cfg_.style_dim) + "]");
  }
}

torch::Tensor GeneratorImpl::run_layer(int k, const torch::Tensor& x_in, const torch::Tensor& rgb_in,
                                       const torch::Tensor& w, torch::Tensor* rgb_out) {
  auto x = x_in;
  auto rgb = rgb_in;
  if (k % 2 == 0 && k > 0) {
    x = upsample2(x);
    rgb = upsample2(rgb);
  }
  auto conv = convs_[static_cast<std::size_t>(k)]->as<ModulatedConv2dImpl>();
  x = conv->forward(x, w) + conv_bias_[k].view({1, -1, 1, 1}) + noise_strength_[k] * noise_[k];
  x = nn::leaky_relu(x) * kSqrt2;
  if (k % 2 == 1) {
    const auto head = static_cast<std::size_t>(k / 2);
    auto to_rgb = to_rgb_[head]->as<ModulatedConv2dImpl>();
    rgb = rgb + to_rgb->forward(x, w) + rgb_bias_[head].view({1, 3, 1, 1});
  }
  *rgb_out = rgb;
  return x;
}

FeatureTensor GeneratorImpl::synthesize_partial(const WPlusLatent& w, int k) {
  const int n = num_layers();
  if (k < 0 || k >= n) {
    throw InvalidInput("splice layer " + std::to_string(k) + " outside [0, " + std::to_string(n) + ")");
  }
  check_latent(w, n);
  const auto batch = w.rows.size(0);
  auto x = const_input_.expand({batch, -1, -1, -1});
  auto rgb = torch::zeros({batch, 3, 4, 4}, w.rows.options());
  for (int i = 0; i <= k; ++i) x = run_layer(i, x, rgb, w.rows.select(1, i), &rgb);
  return {torch::cat({x, rgb}, 1), k};
}

torch::Tensor GeneratorImpl::synthesize_from(const FeatureTensor& f, const WPlusLatent& w_tail) {
  const int n = num_layers();
  const int k = f.layer_index;
  if (k < 0 || k >= n) throw InvalidInput("feature tensor layer index out of range");
  const auto s = GeneratorConfig::layer_resolution(k);
  if (f.values.dim() != 4 || f.values.size(1) != cfg_.feature_channels(k) || f.values.size(2) != s ||
      f.values.size(3) != s) {
    throw InvalidInput("feature tensor shape does not match generator layer " + std::to_string(k));
  }
  check_latent(w_tail, n - 1 - k);
  if (w_tail.rows.size(0) != f.values.size(0)) {
    throw InvalidInput("feature tensor and latent tail batch sizes differ");
  }
  auto x = f.activations();
  auto rgb = f.rgb_skip();
  for (int i = k + 1; i < n; ++i) x = run_layer(i, x, rgb, w_tail.rows.select(1, i - k - 1), &rgb);
  return torch::tanh(rgb);
}

torch::Tensor GeneratorImpl::synthesize(const WPlusLatent& w) {
  check_latent(w, num_layers());
  const int k = num_layers() - 1;
  return synthesize_from(synthesize_partial(w, k), w.tail(k));
}

// ---------------------------------------------------------------------------

namespace {

int disc_channels(const DiscriminatorConfig& c, int res) {
  return std::min(c.channel_max, c.channel_base / res);
}

torch::Tensor eq_conv(const torch::Tensor& x, const torch::Tensor& w, const torch::Tensor& b) {
  const double gain = 1.0 / std::sqrt(static_cast<double>(w.size(1) * w.size(2) * w.size(3)));
  return torch::conv2d(x, w * gain, b, 1, w.size(2) / 2);
}

// Appends one channel holding the across-group standard deviation.
torch::Tensor minibatch_stddev(const torch::Tensor& x) {
  const auto b = x.size(0);
  long group = std::min<long>(4, b);
  while (b % group != 0) --group;
  auto y = x.view({group, b / group, x.size(1), x.size(2), x.size(3)});
  y = (y - y.mean(0)).pow(2).mean(0);
  y = torch::sqrt(y + 1e-8).mean({1, 2, 3});  // [B/group]
  y = y.view({b / group, 1, 1, 1}).repeat({group, 1, x.size(2), x.size(3)});
  return torch::cat({x, y}, 1);
}

}  // namespace

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  auto gen = nn::make_generator(cfg.init_seed);
  const int r = cfg.image_resolution;
  const int c0 = disc_channels(cfg, r);
  from_rgb_w_ = register_parameter("from_rgb_w", nn::normal({c0, 3, 1, 1}, 1.0, gen));
  from_rgb_b_ = register_parameter("from_rgb_b", torch::zeros({c0}));
  int i = 0;
  for (int res = r; res > 4; res /= 2, ++i) {
    const int cin = disc_channels(cfg, res);
    const int cout = disc_channels(cfg, res / 2);
    Block blk;
    const auto id = std::to_string(i);
    blk.conv0 = register_parameter("b" + id + "_conv0", nn::normal({cin, cin, 3, 3}, 1.0, gen));
    blk.bias0 = register_parameter("b" + id + "_bias0", torch::zeros({cin}));
    blk.conv1 = register_parameter("b" + id + "_conv1", nn::normal({cout, cin, 3, 3}, 1.0, gen));
    blk.bias1 = register_parameter("b" + id + "_bias1", torch::zeros({cout}));
    blk.skip = register_parameter("b" + id + "_skip", nn::normal({cout, cin, 1, 1}, 1.0, gen));
    blocks_.push_back(blk);
  }
  const int c4 = disc_channels(cfg, 4);
  fc_w_ = register_parameter("fc_w", nn::normal({c4, (c4 + 1) * 16}, 1.0, gen));
  fc_b_ = register_parameter("fc_b", torch::zeros({c4}));
  out_w_ = register_parameter("out_w", nn::normal({1, c4}, 1.0, gen));
  out_b_ = register_parameter("out_b", torch::zeros({1}));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  const int r = cfg_.image_resolution;
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != r || image.size(3) != r) {
    throw InvalidInput("discriminator expects [B, 3, " + std::to_string(r) + ", " +
                       std::to_string(r) + "]");
  }
  auto x = nn::leaky_relu(eq_conv(image, from_rgb_w_, from_rgb_b_)) * kSqrt2;
  for (const auto& blk : blocks_) {
    auto skip = eq_conv(downsample2(x), blk.skip, {});
    auto h = nn::leaky_relu(eq_conv(x, blk.conv0, blk.bias0)) * kSqrt2;
    h = nn::leaky_relu(eq_conv(downsample2(h), blk.conv1, blk.bias1)) * kSqrt2;
    x = (h + skip) / kSqrt2;
  }
  x = minibatch_stddev(x).flatten(1);
  x = nn::leaky_relu(torch::linear(x, fc_w_ / std::sqrt(static_cast<double>(fc_w_.size(1))), fc_b_)) *
      kSqrt2;
  x = torch::linear(x, out_w_ / std::sqrt(static_cast<double>(out_w_.size(1))), out_b_);
  return x.squeeze(1);
}

// ---------------------------------------------------------------------------

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> ordered;
  for (const auto& p : module.named_parameters(true)) ordered.emplace("p:" + p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) ordered.emplace("b:" + b.key(), b.value());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const unsigned char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= data[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [name, t] : ordered) {
    mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    auto c = t.detach().to(torch::kCPU).contiguous();
    mix(static_cast<const unsigned char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return h;
}

}  // namespace sfe::stylegen
