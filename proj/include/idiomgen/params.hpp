#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idiomgen/rng.hpp"
#include "idiomgen/tensor.hpp"

namespace idiomgen {

struct ParamId {
  std::size_t index = 0;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  bool has_grad = false;
};

/// Named parameters plus Adam state. Handles are indices, so a store and the
/// models that hold ParamIds into it can be copied freely.
class ParamStore {
 public:
  /// Zero-initialized parameter (biases).
  ParamId add(std::string name, std::vector<std::size_t> shape);
  /// uniform(-scale, scale) initialized parameter (weights, embeddings).
  ParamId add_uniform(std::string name, std::vector<std::size_t> shape, Rng& rng,
                      double scale = 0.08);

  Parameter& operator[](ParamId id) { return params_[id.index]; }
  const Parameter& operator[](ParamId id) const { return params_[id.index]; }
  const Tensor& value(ParamId id) const { return params_[id.index].value; }

  /// Throws std::out_of_range when the name is unknown.
  ParamId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::span<Parameter> all() { return params_; }
  std::span<const Parameter> all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t entry_count() const;

  /// Allocates zeroed gradients for every parameter and marks them populated.
  void zero_grad();
  /// Adds another store's gradients (same layout) into this one.
  void accumulate_grads_from(const ParamStore& other);
  void scale_grads(double factor);
  std::uint64_t step() const { return step_; }

  /// True when every parameter value is bit-identical.
  bool same_values(const ParamStore& other) const;

 private:
  friend void adam_step(ParamStore&, double, double, double, double);

  std::vector<Parameter> params_;
  std::uint64_t step_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update over every parameter, then clears gradients.
/// Throws NumericError naming the parameter if any gradient is missing or an
/// updated value is non-finite.
void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps);
inline void adam_step(ParamStore& store, const AdamOptions& o) {
  adam_step(store, o.lr, o.beta1, o.beta2, o.eps);
}

double global_grad_norm(const ParamStore& store);
/// Rescales gradients so the global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(ParamStore& store, double max_norm);

}  // namespace idiomgen
