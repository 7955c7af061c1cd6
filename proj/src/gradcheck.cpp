#include "idiomgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "idiomgen/tensor.hpp"

namespace idiomgen {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss_fn, ParamStore& store, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  store.zero_grad();
  checked(loss_fn(store, &store));
  std::vector<Tensor> analytic;
  analytic.reserve(store.size());
  for (const auto& p : store.all()) analytic.push_back(p.grad);
  store.zero_grad();

  GradCheckResult result;
  auto params = store.all();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = checked(loss_fn(store, nullptr));
      values[i] = saved - eps;
      const double down = checked(loss_fn(store, nullptr));
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.entries_checked;
      if (rel > result.max_relative_error || result.entries_checked == 1) {
        result.max_relative_error = rel;
        result.worst_parameter = params[pi].name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace idiomgen
