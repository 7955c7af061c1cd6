#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "idiomgen/params.hpp"

namespace idiomgen {

/// Evaluates a scalar loss over the store. When grad_sink is non-null the
/// function must also run the backward pass into it.
using LossFn = std::function<double(const ParamStore& store, ParamStore* grad_sink)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients with central differences
/// (f(theta + eps) - f(theta - eps)) / (2 eps) for every parameter entry and
/// reports the largest |a - n| / max(|a|, |n|, 1e-8). Values are restored.
GradCheckResult grad_check(const LossFn& loss_fn, ParamStore& store, double eps = 1e-6);

}  // namespace idiomgen
