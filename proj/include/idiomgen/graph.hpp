#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "idiomgen/params.hpp"
#include "idiomgen/tensor.hpp"

namespace idiomgen {

/// Handle to a node on a Graph.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over vector/matrix values. Every op records a backward
/// closure that pushes its output gradient to its inputs. Parameter reads go
/// through ParamIds; their gradients land in the optional grad sink store.
///
/// A Graph without a sink records no closures and is read-only on the
/// parameters, so concurrent inference graphs over one store are safe.
class Graph {
 public:
  explicit Graph(const ParamStore& params, ParamStore* grad_sink = nullptr);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool records_grad() const { return sink_ != nullptr; }
  const ParamStore& params() const { return *params_; }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value[0]; }
  /// Only valid after backward().
  std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Tensor t);
  Var param(ParamId id);
  Var embedding(ParamId table, std::size_t row);

  Var linear(ParamId w, Var x);                                    // W x
  Var affine(ParamId w, ParamId b, Var x);                         // W x + b
  Var linear2(ParamId w, Var x, ParamId u, Var h, ParamId b);      // W x + U h + b
  Var matmul(Var x, ParamId p);                                    // X P
  Var matvec(Var x, Var h);                                        // X h
  Var weighted_rows(Var x, Var a);                                 // X^T a

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);

  Var concat(std::span<const Var> parts);
  Var stack(std::span<const Var> rows);
  Var sum(std::span<const Var> parts);
  Var dot(Var a, Var b);

  Var softmax(Var a);
  /// Softmax restricted to positions where mask is nonzero; others are 0.
  /// At least one position must be selected.
  Var masked_softmax(Var a, std::vector<char> mask);

  /// Binary cross-entropy on sigmoid(score) for label in {0, 1}.
  Var bce_with_logits(Var score, double label);

  /// -log of the joint copy/generate probability of one target token:
  /// exp-scores of copy positions and (optionally) one vocabulary entry, over
  /// the normalizer of all copy and generate scores.
  Var copy_gen_nll(Var psi_copy, Var psi_gen, std::vector<std::size_t> copy_positions,
                   std::optional<std::size_t> gen_index);

  /// Escape hatch for fused ops with a hand-written backward.
  Var custom(Tensor value, std::function<void(std::span<const double> out_grad)> backward);
  void accumulate_grad(Var v, std::span<const double> g);
  void accumulate_param_grad(ParamId id, std::span<const double> g);

  /// Seeds d(loss)/d(loss) = 1 and runs every closure in reverse order.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void()> back;
  };

  Var push(Tensor value, std::function<void()> back);
  std::vector<double>& g(Var v) { return nodes_[v.id].grad; }
  std::span<double> param_grad(ParamId id);

  const ParamStore* params_;
  ParamStore* sink_;
  std::vector<Node> nodes_;
};

}  // namespace idiomgen
