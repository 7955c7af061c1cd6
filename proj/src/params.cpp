#include "idiomgen/params.hpp"

#include <cmath>
#include <stdexcept>

namespace idiomgen {

ParamId ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  p.m = Tensor(shape);
  p.v = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  return ParamId{params_.size() - 1};
}

ParamId ParamStore::add_uniform(std::string name, std::vector<std::size_t> shape, Rng& rng,
                                double scale) {
  const ParamId id = add(std::move(name), std::move(shape));
  for (double& v : params_[id.index].value.values()) v = rng.uniform(-scale, scale);
  return id;
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamId{i};
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParamStore::contains(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParamStore::entry_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    p.grad.fill(0.0);
    p.has_grad = true;
  }
}

void ParamStore::accumulate_grads_from(const ParamStore& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("accumulate_grads_from: layout mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].grad.values();
    auto src = other.params_[i].grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    params_[i].has_grad = params_[i].has_grad || other.params_[i].has_grad;
  }
}

void ParamStore::scale_grads(double factor) {
  for (auto& p : params_) {
    for (double& g : p.grad.values()) g *= factor;
  }
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (other.params_.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (!(params_[i].value == other.params_[i].value)) return false;
  }
  return true;
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps) {
  for (const auto& p : store.params_) {
    if (!p.has_grad) throw NumericError("adam_step: missing gradient for parameter " + p.name);
  }
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double corr1 = 1.0 - std::pow(beta1, t);
  const double corr2 = 1.0 - std::pow(beta2, t);
  for (auto& p : store.params_) {
    auto value = p.value.values();
    auto grad = p.grad.values();
    auto m = p.m.values();
    auto v = p.v.values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    if (!p.value.all_finite()) throw NumericError("adam_step: non-finite value in " + p.name);
    p.grad.fill(0.0);
    p.has_grad = false;
  }
}

double global_grad_norm(const ParamStore& store) {
  double s = 0.0;
  for (const auto& p : store.all()) {
    for (double g : p.grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_global_norm(ParamStore& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) store.scale_grads(max_norm / norm);
  return norm;
}

}  // namespace idiomgen
