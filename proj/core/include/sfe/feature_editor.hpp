#pragma once

// Feature Editor H, the delta signal it is conditioned on, optional spatial
// masking of that signal, and the inference pipeline tying inverter, base
// encoder, editor and generator together.

#include <cstdint>
#include <optional>
#include <string>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/types.h>

#include "sfe/blocks.hpp"
#include "sfe/direction.hpp"
#include "sfe/encoder_w.hpp"
#include "sfe/inverter.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::feature_editor {

struct FeatureEditorConfig {
  int blocks = 6;
  int delta_source_layer = -1;  // -1: use the splice layer k
  std::uint64_t init_seed = 41;

  int source_layer(int k) const { return delta_source_layer < 0 ? k : delta_source_layer; }
  void validate(const stylegen::GeneratorConfig& g, int k) const;
  friend bool operator==(const FeatureEditorConfig&, const FeatureEditorConfig&) = default;
};

struct DeltaMap {
  torch::Tensor values;  // [B, C_L + 3, S_L, S_L]
  int source_layer = 0;
  std::string direction_name;
  double power = 0.0;
};

/// Binary mask at the spatial resolution of F_k, [B, S, S] bool.
struct RegionMask {
  torch::Tensor values;

  /// Downscales image-resolution masks ([B, R, R] or [R, R]) by area
  /// averaging; a cell is kept when at least half of it is covered.
  static RegionMask from_image_mask(const torch::Tensor& mask, int resolution);
};

/// F_{a}(L) - F_{b}(L).
DeltaMap compute_delta_between(stylegen::Generator& g, const stylegen::WPlusLatent& a,
                               const stylegen::WPlusLatent& b, int source_layer);

/// F_{w_E}(L) - F_{w_E + power * d}(L).
DeltaMap compute_delta(stylegen::Generator& g, const stylegen::WPlusLatent& w_e,
                       const directions::EditingDirection& d, double power, int source_layer);

/// Entrywise delta * mask, broadcast over channels.
DeltaMap apply_mask(const DeltaMap& delta, const RegionMask& mask);

/// Maps a delta taken at a deeper layer L onto the layer-k shape with strided
/// residual blocks; the last 1x1 convolution starts at zero.
class DeltaReducerImpl : public torch::nn::Module {
 public:
  DeltaReducerImpl(const stylegen::GeneratorConfig& g, int source_layer, int k, std::uint64_t seed);
  DeltaMap forward(const DeltaMap& delta);

 private:
  int source_layer_, k_;
  torch::nn::ModuleList blocks_{nullptr};
  nn::Conv2d out_{nullptr};
};
TORCH_MODULE(DeltaReducer);

/// F_k' = H(concat(F_k, delta)). The input projection starts as the identity
/// on F_k so an untrained editor is close to a no-op.
class FeatureEditorImpl : public torch::nn::Module {
 public:
  FeatureEditorImpl(const FeatureEditorConfig& cfg, const stylegen::GeneratorConfig& g, int k);
  stylegen::FeatureTensor forward(const stylegen::FeatureTensor& f_k, const DeltaMap& delta);

  const FeatureEditorConfig& config() const { return cfg_; }
  /// Present only when the delta comes from a layer other than k.
  DeltaReducer reducer() const { return reducer_; }

 private:
  FeatureEditorConfig cfg_;
  int k_;
  nn::ResidualStack body_{nullptr};
  DeltaReducer reducer_{nullptr};
};
TORCH_MODULE(FeatureEditor);

enum class PipelineMode { full, no_H, no_E };

/// Inference path. All modules are used in eval mode; nothing is trained.
class SfePipeline {
 public:
  SfePipeline(stylegen::Generator g, inverter::Inverter inv, encoder_w::BaseEncoder e,
              FeatureEditor h, PipelineMode mode = PipelineMode::full);

  torch::Tensor invert_image(const torch::Tensor& x);
  torch::Tensor edit_image(const torch::Tensor& x, const directions::EditingDirection& d, double power,
                           const std::optional<RegionMask>& mask = std::nullopt);

  PipelineMode mode() const { return mode_; }
  stylegen::Generator& generator() { return g_; }

  /// The delta fed to H in the most recent edit_image call, after reduction
  /// and masking.
  const DeltaMap& last_delta() const { return last_delta_; }

 private:
  stylegen::Generator g_;
  inverter::Inverter inv_;
  encoder_w::BaseEncoder e_;
  FeatureEditor h_;
  PipelineMode mode_;
  int style_dim_;
  DeltaMap last_delta_;
};

}  // namespace sfe::feature_editor
