#include "idiomgen/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace idiomgen {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Graph::Graph(const ParamStore& params, ParamStore* grad_sink) : params_(&params), sink_(grad_sink) {
  if (sink_ != nullptr && sink_ != params_) {
    throw std::invalid_argument("Graph: grad sink must be the parameter store itself");
  }
  nodes_.reserve(256);
}

Var Graph::push(Tensor value, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  if (sink_ != nullptr) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

std::span<double> Graph::param_grad(ParamId id) {
  Parameter& p = (*sink_)[id];
  p.has_grad = true;
  return p.grad.values();
}

void Graph::accumulate_grad(Var v, std::span<const double> grad) {
  auto& dst = g(v);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grad[i];
}

void Graph::accumulate_param_grad(ParamId id, std::span<const double> grad) {
  auto dst = param_grad(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grad[i];
}

Var Graph::constant(Tensor t) { return push(std::move(t), nullptr); }

Var Graph::param(ParamId id) {
  Var out{nodes_.size()};
  return push(params_->value(id), [this, id, out] { accumulate_param_grad(id, g(out)); });
}

Var Graph::embedding(ParamId table, std::size_t row) {
  const Tensor& t = params_->value(table);
  require(row < t.rows(), "embedding: row out of range");
  auto r = t.row(row);
  Var out{nodes_.size()};
  return push(Tensor::vector({r.begin(), r.end()}), [this, table, row, out] {
    const std::size_t cols = params_->value(table).cols();
    auto dst = param_grad(table).subspan(row * cols, cols);
    const auto& go = g(out);
    for (std::size_t c = 0; c < cols; ++c) dst[c] += go[c];
  });
}

Var Graph::linear(ParamId w, Var x) {
  const Tensor& wt = params_->value(w);
  require(wt.cols() == value(x).size(), "linear: dimension mismatch");
  Tensor y({wt.rows()});
  gemv_acc(wt, value(x).values(), y.values());
  Var out{nodes_.size()};
  return push(std::move(y), [this, w, x, out] {
    const Tensor& wt = params_->value(w);
    outer_acc(param_grad(w), wt.cols(), g(out), value(x).values());
    gemv_t_acc(wt, g(out), g(x));
  });
}

Var Graph::affine(ParamId w, ParamId b, Var x) {
  const Tensor& wt = params_->value(w);
  const Tensor& bt = params_->value(b);
  require(wt.cols() == value(x).size() && bt.size() == wt.rows(), "affine: dimension mismatch");
  Tensor y = bt;
  gemv_acc(wt, value(x).values(), y.values());
  Var out{nodes_.size()};
  return push(std::move(y), [this, w, b, x, out] {
    const Tensor& wt = params_->value(w);
    outer_acc(param_grad(w), wt.cols(), g(out), value(x).values());
    accumulate_param_grad(b, g(out));
    gemv_t_acc(wt, g(out), g(x));
  });
}

Var Graph::linear2(ParamId w, Var x, ParamId u, Var h, ParamId b) {
  const Tensor& wt = params_->value(w);
  const Tensor& ut = params_->value(u);
  const Tensor& bt = params_->value(b);
  require(wt.cols() == value(x).size() && ut.cols() == value(h).size() &&
              wt.rows() == ut.rows() && bt.size() == wt.rows(),
          "linear2: dimension mismatch");
  Tensor y = bt;
  gemv_acc(wt, value(x).values(), y.values());
  gemv_acc(ut, value(h).values(), y.values());
  Var out{nodes_.size()};
  return push(std::move(y), [this, w, x, u, h, b, out] {
    const Tensor& wt = params_->value(w);
    const Tensor& ut = params_->value(u);
    outer_acc(param_grad(w), wt.cols(), g(out), value(x).values());
    outer_acc(param_grad(u), ut.cols(), g(out), value(h).values());
    accumulate_param_grad(b, g(out));
    gemv_t_acc(wt, g(out), g(x));
    gemv_t_acc(ut, g(out), g(h));
  });
}

Var Graph::matmul(Var x, ParamId p) {
  const Tensor& xt = value(x);
  const Tensor& pt = params_->value(p);
  require(xt.rank() == 2 && xt.cols() == pt.rows(), "matmul: dimension mismatch");
  const std::size_t n = xt.rows(), a = pt.rows(), b = pt.cols();
  Tensor y = Tensor::matrix(n, b);
  for (std::size_t i = 0; i < n; ++i) {
    auto yi = y.row(i);
    auto xi = xt.row(i);
    for (std::size_t k = 0; k < a; ++k) {
      const double v = xi[k];
      auto pk = pt.row(k);
      for (std::size_t j = 0; j < b; ++j) yi[j] += v * pk[j];
    }
  }
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, p, out] {
    const Tensor& xt = value(x);
    const Tensor& pt = params_->value(p);
    const std::size_t n = xt.rows(), a = pt.rows(), b = pt.cols();
    auto dp = param_grad(p);
    auto& dx = g(x);
    const auto& dy = g(out);
    for (std::size_t i = 0; i < n; ++i) {
      const double* dyi = dy.data() + i * b;
      auto xi = xt.row(i);
      for (std::size_t k = 0; k < a; ++k) {
        auto pk = pt.row(k);
        double acc = 0.0;
        double* dpk = dp.data() + k * b;
        const double v = xi[k];
        for (std::size_t j = 0; j < b; ++j) {
          acc += dyi[j] * pk[j];
          dpk[j] += v * dyi[j];
        }
        dx[i * a + k] += acc;
      }
    }
  });
}

Var Graph::matvec(Var x, Var h) {
  const Tensor& xt = value(x);
  require(xt.rank() == 2 && xt.cols() == value(h).size(), "matvec: dimension mismatch");
  Tensor y({xt.rows()});
  gemv_acc(xt, value(h).values(), y.values());
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, h, out] {
    const Tensor& xt = value(x);
    outer_acc(g(x), xt.cols(), g(out), value(h).values());
    gemv_t_acc(xt, g(out), g(h));
  });
}

Var Graph::weighted_rows(Var x, Var a) {
  const Tensor& xt = value(x);
  require(xt.rank() == 2 && xt.rows() == value(a).size(), "weighted_rows: dimension mismatch");
  Tensor y({xt.cols()});
  gemv_t_acc(xt, value(a).values(), y.values());
  Var out{nodes_.size()};
  return push(std::move(y), [this, x, a, out] {
    const Tensor& xt = value(x);
    outer_acc(g(x), xt.cols(), value(a).values(), g(out));
    gemv_acc(xt, g(out), g(a));
  });
}

Var Graph::add(Var a, Var b) {
  require(value(a).size() == value(b).size(), "add: dimension mismatch");
  Tensor y = value(a);
  auto bv = value(b).values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    accumulate_grad(a, g(out));
    accumulate_grad(b, g(out));
  });
}

Var Graph::sub(Var a, Var b) {
  require(value(a).size() == value(b).size(), "sub: dimension mismatch");
  Tensor y = value(a);
  auto bv = value(b).values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    accumulate_grad(a, g(out));
    auto& gb = g(b);
    const auto& go = g(out);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
  });
}

Var Graph::mul(Var a, Var b) {
  require(value(a).size() == value(b).size(), "mul: dimension mismatch");
  Tensor y = value(a);
  auto bv = value(b).values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, b, out] {
    auto av = value(a).values();
    auto bv = value(b).values();
    const auto& go = g(out);
    auto& ga = g(a);
    auto& gb = g(b);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * bv[i];
      gb[i] += go[i] * av[i];
    }
  });
}

Var Graph::scale(Var a, double c) {
  Tensor y = value(a);
  for (double& v : y.values()) v *= c;
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, c, out] {
    auto& ga = g(a);
    const auto& go = g(out);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * go[i];
  });
}

Var Graph::sigmoid(Var a) {
  Tensor y = value(a);
  for (double& v : y.values()) v = idiomgen::sigmoid(v);
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    auto yv = value(out).values();
    auto& ga = g(a);
    const auto& go = g(out);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var Graph::tanh(Var a) {
  Tensor y = value(a);
  for (double& v : y.values()) v = std::tanh(v);
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    auto yv = value(out).values();
    auto& ga = g(a);
    const auto& go = g(out);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var Graph::concat(std::span<const Var> parts) {
  std::vector<double> v;
  for (Var p : parts) {
    auto pv = value(p).values();
    v.insert(v.end(), pv.begin(), pv.end());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Var out{nodes_.size()};
  return push(Tensor::vector(std::move(v)), [this, ps = std::move(ps), out] {
    std::size_t off = 0;
    const auto& go = g(out);
    for (Var p : ps) {
      auto& gp = g(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
      off += gp.size();
    }
  });
}

Var Graph::stack(std::span<const Var> rows) {
  require(!rows.empty(), "stack: no rows");
  const std::size_t d = value(rows[0]).size();
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (Var r : rows) {
    require(value(r).size() == d, "stack: ragged rows");
    auto rv = value(r).values();
    v.insert(v.end(), rv.begin(), rv.end());
  }
  std::vector<Var> rs(rows.begin(), rows.end());
  Var out{nodes_.size()};
  return push(Tensor({rows.size(), d}, std::move(v)), [this, rs = std::move(rs), d, out] {
    const auto& go = g(out);
    for (std::size_t k = 0; k < rs.size(); ++k) {
      auto& gr = g(rs[k]);
      for (std::size_t i = 0; i < d; ++i) gr[i] += go[k * d + i];
    }
  });
}

Var Graph::sum(std::span<const Var> parts) {
  require(!parts.empty(), "sum: no parts");
  Tensor y = value(parts[0]);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    auto pv = value(parts[k]).values();
    require(pv.size() == y.size(), "sum: dimension mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += pv[i];
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Var out{nodes_.size()};
  return push(std::move(y), [this, ps = std::move(ps), out] {
    for (Var p : ps) accumulate_grad(p, g(out));
  });
}

Var Graph::dot(Var a, Var b) {
  require(value(a).size() == value(b).size(), "dot: dimension mismatch");
  const double y = idiomgen::dot(value(a).values(), value(b).values());
  Var out{nodes_.size()};
  return push(Tensor::vector({y}), [this, a, b, out] {
    const double go = g(out)[0];
    auto av = value(a).values();
    auto bv = value(b).values();
    auto& ga = g(a);
    auto& gb = g(b);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += go * bv[i];
      gb[i] += go * av[i];
    }
  });
}

Var Graph::softmax(Var a) {
  Tensor y = Tensor::vector(idiomgen::softmax(value(a).values()));
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    auto yv = value(out).values();
    const auto& go = g(out);
    const double inner = idiomgen::dot(yv, go);
    auto& ga = g(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += yv[i] * (go[i] - inner);
  });
}

Var Graph::masked_softmax(Var a, std::vector<char> mask) {
  auto av = value(a).values();
  require(mask.size() == av.size(), "masked_softmax: mask size mismatch");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i]) m = std::max(m, av[i]);
  }
  require(std::isfinite(m), "masked_softmax: empty mask");
  Tensor y({av.size()});
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i]) {
      y[i] = std::exp(av[i] - m);
      s += y[i];
    }
  }
  for (double& v : y.values()) v /= s;
  Var out{nodes_.size()};
  return push(std::move(y), [this, a, out] {
    auto yv = value(out).values();
    const auto& go = g(out);
    const double inner = idiomgen::dot(yv, go);
    auto& ga = g(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += yv[i] * (go[i] - inner);
  });
}

Var Graph::bce_with_logits(Var score, double label) {
  const double s = scalar(score);
  // log(1 + e^s) - label * s, evaluated without overflow.
  const double softplus = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  Var out{nodes_.size()};
  return push(Tensor::vector({softplus - label * s}), [this, score, label, s, out] {
    g(score)[0] += g(out)[0] * (idiomgen::sigmoid(s) - label);
  });
}

Var Graph::copy_gen_nll(Var psi_copy, Var psi_gen, std::vector<std::size_t> copy_positions,
                        std::optional<std::size_t> gen_index) {
  auto c = value(psi_copy).values();
  auto v = value(psi_gen).values();
  require(!copy_positions.empty() || gen_index.has_value(), "copy_gen_nll: unreachable target");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : c) m = std::max(m, x);
  for (double x : v) m = std::max(m, x);
  double z = 0.0;
  for (double x : c) z += std::exp(x - m);
  for (double x : v) z += std::exp(x - m);
  double t = 0.0;
  for (std::size_t j : copy_positions) t += std::exp(c[j] - m);
  if (gen_index) t += std::exp(v[*gen_index] - m);
  const double loss = std::log(z) - std::log(t);
  Var out{nodes_.size()};
  return push(Tensor::vector({loss}), [this, psi_copy, psi_gen, copy_positions = std::move(copy_positions),
                                       gen_index, m, z, t, out] {
    const double go = g(out)[0];
    auto c = value(psi_copy).values();
    auto v = value(psi_gen).values();
    auto& gc = g(psi_copy);
    auto& gv = g(psi_gen);
    for (std::size_t j = 0; j < c.size(); ++j) gc[j] += go * std::exp(c[j] - m) / z;
    for (std::size_t k = 0; k < v.size(); ++k) gv[k] += go * std::exp(v[k] - m) / z;
    for (std::size_t j : copy_positions) gc[j] -= go * std::exp(c[j] - m) / t;
    if (gen_index) gv[*gen_index] -= go * std::exp(v[*gen_index] - m) / t;
  });
}

Var Graph::custom(Tensor value, std::function<void(std::span<const double>)> backward) {
  Var out{nodes_.size()};
  return push(std::move(value), [this, backward = std::move(backward), out] { backward(g(out)); });
}

void Graph::backward(Var loss) {
  if (sink_ == nullptr) throw std::logic_error("Graph::backward on a graph without a grad sink");
  require(value(loss).size() == 1, "backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

}  // namespace idiomgen
