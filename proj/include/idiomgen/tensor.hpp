#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace idiomgen {

/// Raised for non-finite values, failed gradient checks and optimizer misuse.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles. Rank 1 is a vector, rank 2 a matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);
std::size_t shape_product(const std::vector<std::size_t>& shape);

// Kernels over matrices (rows x cols) and spans. Output spans accumulate.

/// y += W x
void gemv_acc(const Tensor& w, std::span<const double> x, std::span<double> y);
/// x += W^T y
void gemv_t_acc(const Tensor& w, std::span<const double> y, std::span<double> x);
/// W += a b^T  (W is rows x cols, a has rows entries, b has cols entries)
void outer_acc(std::span<double> w, std::size_t cols, std::span<const double> a,
               std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double log_sum_exp(std::span<const double> xs);
/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> xs);
double sigmoid(double x);

}  // namespace idiomgen
