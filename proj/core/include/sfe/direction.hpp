#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "sfe/stylegen.hpp"
#include "sfe/toyworld.hpp"

namespace sfe::directions {

/// A named displacement in W (one row broadcast to every layer) or W+
/// (one row per layer), optionally restricted to layers [lo, hi).
struct EditingDirection {
  std::string name;
  torch::Tensor vector;  // float64, [D] or [N, D]; unit norm unless zero()
  std::optional<std::pair<int, int>> layer_range;
  std::vector<double> default_powers;

  // Evaluation metadata: the attribute this direction is meant to switch on
  // (target_presence = true) or off.
  std::optional<toyworld::Attribute> attribute;
  bool target_presence = true;
  std::string source;  // "probe", "pca" or "zero"

  static EditingDirection zero(int style_dim);
  bool is_zero() const;

  /// Checks unit norm (or exact zero for the zero direction) and layer range.
  void validate(int num_layers, int style_dim) const;

  /// Displacement power * d as a [N, D] tensor in the given dtype.
  torch::Tensor displacement(int num_layers, double power, torch::ScalarType dtype) const;

  /// w + power * d, broadcast over the batch and scoped to layer_range.
  stylegen::WPlusLatent apply(const stylegen::WPlusLatent& w, double power) const;

  /// Largest default power; the one used for single-power evaluation.
  double calibrated_power() const;
};

/// Applies several (direction, power) edits as one summed displacement, so
/// that composing d with -d leaves w bit-identical.
stylegen::WPlusLatent apply_all(const stylegen::WPlusLatent& w,
                                const std::vector<std::pair<const EditingDirection*, double>>& edits);

}  // namespace sfe::directions
