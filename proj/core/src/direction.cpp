#include "sfe/direction.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::directions {

EditingDirection EditingDirection::zero(int style_dim) {
  EditingDirection d;
  d.name = "zero";
  d.vector = torch::zeros({style_dim}, torch::kFloat64);
  d.default_powers = {0.0};
  d.source = "zero";
  return d;
}

bool EditingDirection::is_zero() const {
  return vector.defined() && vector.abs().max().item<double>() == 0.0;
}

void EditingDirection::validate(int num_layers, int style_dim) const {
  if (name.empty()) throw InvalidInput("direction name must not be empty");
  if (!vector.defined()) throw InvalidInput("direction '" + name + "' has no vector");
  const bool row = vector.dim() == 1 && vector.size(0) == style_dim;
  const bool per_layer = vector.dim() == 2 && vector.size(0) == num_layers && vector.size(1) == style_dim;
  if (!row && !per_layer) throw InvalidInput("direction '" + name + "' has the wrong shape");
  if (!is_zero()) {
    const double norm = vector.to(torch::kFloat64).norm().item<double>();
    if (std::abs(norm - 1.0) > 1e-9) {
      throw InvalidInput("direction '" + name + "' is not unit-normalised");
    }
  }
  if (layer_range) {
    const auto [lo, hi] = *layer_range;
    if (lo < 0 || hi > num_layers || lo >= hi) {
      throw InvalidInput("direction '" + name + "' has an invalid layer range");
    }
  }
}

torch::Tensor EditingDirection::displacement(int num_layers, double power, torch::ScalarType dtype) const {
  auto v = vector.to(torch::kFloat64);
  auto rows = v.dim() == 1 ? v.unsqueeze(0).expand({num_layers, v.size(0)}).clone() : v.clone();
  if (rows.size(0) != num_layers) throw InvalidInput("direction '" + name + "' layer count mismatch");
  if (layer_range) {
    auto scope = torch::zeros({num_layers, 1}, torch::kFloat64);
    scope.slice(0, layer_range->first, layer_range->second).fill_(1.0);
    rows = rows * scope;
  }
  return (rows * power).to(dtype);
}

stylegen::WPlusLatent EditingDirection::apply(const stylegen::WPlusLatent& w, double power) const {
  return apply_all(w, {{this, power}});
}

double EditingDirection::calibrated_power() const {
  if (default_powers.empty()) return 0.0;
  return *std::max_element(default_powers.begin(), default_powers.end());
}

stylegen::WPlusLatent apply_all(const stylegen::WPlusLatent& w,
                                const std::vector<std::pair<const EditingDirection*, double>>& edits) {
  const int n = w.num_layers();
  auto total = torch::zeros({n, w.rows.size(2)}, torch::kFloat64);
  for (const auto& [d, power] : edits) total = total + d->displacement(n, power, torch::kFloat64);
  return {w.rows + total.to(w.rows.scalar_type()).unsqueeze(0)};
}

}  // namespace sfe::directions
