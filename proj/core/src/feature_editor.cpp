#include "sfe/feature_editor.hpp"

#include <cmath>

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::feature_editor {

void FeatureEditorConfig::validate(const stylegen::GeneratorConfig& g, int k) const {
  if (blocks < 1) throw InvalidInput("feature_editor.blocks must be >= 1");
  const int l = source_layer(k);
  if (l < k || l >= g.num_layers()) {
    throw InvalidInput("feature_editor.delta_source_layer must be in [k, N)");
  }
}

RegionMask RegionMask::from_image_mask(const torch::Tensor& mask, int resolution) {
  auto m = mask.dim() == 2 ? mask.unsqueeze(0) : mask;
  if (m.dim() != 3 || m.size(1) != m.size(2)) throw InvalidInput("mask must be [R, R] or [B, R, R]");
  const auto r = m.size(1);
  if (r % resolution != 0) throw InvalidInput("mask resolution is not a multiple of the target");
  auto f = m.to(torch::kFloat32).unsqueeze(1);
  auto pooled = torch::avg_pool2d(f, r / resolution).squeeze(1);
  return {pooled >= 0.5};
}

DeltaMap compute_delta_between(stylegen::Generator& g, const stylegen::WPlusLatent& a,
                               const stylegen::WPlusLatent& b, int source_layer) {
  if (source_layer < 0 || source_layer >= g->num_layers()) {
    throw InvalidInput("delta source layer " + std::to_string(source_layer) + " out of range");
  }
  auto fa = g->synthesize_partial(a, source_layer);
  auto fb = g->synthesize_partial(b, source_layer);
  return {fa.values - fb.values, source_layer, "", 0.0};
}

DeltaMap compute_delta(stylegen::Generator& g, const stylegen::WPlusLatent& w_e,
                       const directions::EditingDirection& d, double power, int source_layer) {
  auto out = compute_delta_between(g, w_e, d.apply(w_e, power), source_layer);
  out.direction_name = d.name;
  out.power = power;
  return out;
}

DeltaMap apply_mask(const DeltaMap& delta, const RegionMask& mask) {
  const auto& v = delta.values;
  auto m = mask.values;
  if (m.dim() == 2) m = m.unsqueeze(0);
  if (m.dim() != 3 || m.size(1) != v.size(2) || m.size(2) != v.size(3) ||
      (m.size(0) != 1 && m.size(0) != v.size(0))) {
    throw InvalidInput("mask shape does not match the delta");
  }
  DeltaMap out = delta;
  out.values = v * m.unsqueeze(1).to(v.scalar_type());
  return out;
}

DeltaReducerImpl::DeltaReducerImpl(const stylegen::GeneratorConfig& g, int source_layer, int k,
                                   std::uint64_t seed)
    : source_layer_(source_layer), k_(k) {
  if (source_layer < k) throw InvalidInput("delta reducer needs source layer >= k");
  auto gen = nn::make_generator(seed);
  const int cin = g.feature_channels(source_layer);
  const int cout = g.feature_channels(k);
  int factor = stylegen::GeneratorConfig::layer_resolution(source_layer) /
               stylegen::GeneratorConfig::layer_resolution(k);
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  int c = cin;
  do {
    const int stride = factor > 1 ? 2 : 1;
    blocks_->push_back(nn::ResidualBlock(c, cout, stride, gen));
    c = cout;
    factor /= stride;
  } while (factor > 1);
  out_ = register_module("out", nn::Conv2d(cout, cout, 1, 1, gen, 0.0));
}

DeltaMap DeltaReducerImpl::forward(const DeltaMap& delta) {
  if (delta.source_layer != source_layer_) throw InvalidInput("delta comes from an unexpected layer");
  auto h = delta.values;
  for (const auto& b : *blocks_) h = b->as<nn::ResidualBlockImpl>()->forward(h);
  DeltaMap out = delta;
  out.values = out_->forward(h);
  out.source_layer = k_;
  return out;
}

FeatureEditorImpl::FeatureEditorImpl(const FeatureEditorConfig& cfg, const stylegen::GeneratorConfig& g,
                                     int k)
    : cfg_(cfg), k_(k) {
  cfg_.validate(g, k);
  auto gen = nn::make_generator(cfg_.init_seed);
  const int fc = g.feature_channels(k);
  body_ = register_module("body", nn::ResidualStack(2 * fc, fc, cfg_.blocks, gen));
  body_->init_passthrough({1.0, 0.0});
  const int l = cfg_.source_layer(k);
  if (l != k) reducer_ = register_module("reducer", DeltaReducer(g, l, k, cfg_.init_seed + 1));
}

stylegen::FeatureTensor FeatureEditorImpl::forward(const stylegen::FeatureTensor& f_k, const DeltaMap& delta) {
  if (f_k.layer_index != k_) throw InvalidInput("feature editor expects layer " + std::to_string(k_));
  if (delta.source_layer != k_ || !delta.values.sizes().equals(f_k.values.sizes())) {
    throw InvalidInput("delta shape does not match F_k");
  }
  return {body_->forward(torch::cat({f_k.values, delta.values}, 1)), k_};
}

SfePipeline::SfePipeline(stylegen::Generator g, inverter::Inverter inv, encoder_w::BaseEncoder e,
                         FeatureEditor h, PipelineMode mode)
    : g_(std::move(g)), inv_(std::move(inv)), e_(std::move(e)), h_(std::move(h)), mode_(mode) {
  style_dim_ = g_->config().style_dim;
  g_->eval();
  inv_->eval();
  if (!e_.is_empty()) e_->eval();
  if (!h_.is_empty()) h_->eval();
  if (mode_ != PipelineMode::no_H && h_.is_empty()) throw InvalidInput("pipeline needs a feature editor");
  if (mode_ == PipelineMode::full && e_.is_empty()) throw InvalidInput("pipeline needs a base encoder");
}

torch::Tensor SfePipeline::invert_image(const torch::Tensor& x) {
  return edit_image(x, directions::EditingDirection::zero(style_dim_), 0.0);
}

torch::Tensor SfePipeline::edit_image(const torch::Tensor& x, const directions::EditingDirection& d,
                                      double power, const std::optional<RegionMask>& mask) {
  torch::NoGradGuard ng;
  const int k = inv_->k();
  auto inv = inv_->invert(g_, x);
  auto w_edit = d.apply(inv.w, power);
  auto f_edit = inv.f_k;
  if (mode_ != PipelineMode::no_H) {
    auto w_src = mode_ == PipelineMode::no_E ? inv.w : e_->encode_wplus(x);
    auto delta = compute_delta(g_, w_src, d, power, h_->config().source_layer(k));
    if (delta.source_layer != k) delta = h_->reducer()->forward(delta);
    if (mask) delta = apply_mask(delta, *mask);
    f_edit = h_->forward(inv.f_k, delta);
    last_delta_ = std::move(delta);
  }
  return g_->synthesize_from(f_edit, w_edit.tail(k));
}

}  // namespace sfe::feature_editor
