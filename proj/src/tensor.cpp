#include "idiomgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace idiomgen {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size()) {
    throw std::invalid_argument("tensor value count " + std::to_string(values_.size()) +
                                " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void gemv_acc(const Tensor& w, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* p = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = p + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

void gemv_t_acc(const Tensor& w, std::span<const double> y, std::span<double> x) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* p = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* wr = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) x[c] += wr[c] * yr;
  }
}

void outer_acc(std::span<double> w, std::size_t cols, std::span<const double> a,
               std::span<const double> b) {
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += ar * b[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> xs) {
  std::vector<double> out(xs.size());
  if (xs.empty()) return out;
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = std::exp(xs[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace idiomgen
