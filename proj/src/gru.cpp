#include "idiomgen/gru.hpp"

#include <array>
#include <stdexcept>

namespace idiomgen {

GruCell GruCell::create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng) {
  GruCell c;
  c.input_size = input_size;
  c.hidden_size = hidden_size;
  c.w_z = store.add_uniform(prefix + ".W_z", {hidden_size, input_size}, rng);
  c.u_z = store.add_uniform(prefix + ".U_z", {hidden_size, hidden_size}, rng);
  c.b_z = store.add(prefix + ".b_z", {hidden_size});
  c.w_r = store.add_uniform(prefix + ".W_r", {hidden_size, input_size}, rng);
  c.u_r = store.add_uniform(prefix + ".U_r", {hidden_size, hidden_size}, rng);
  c.b_r = store.add(prefix + ".b_r", {hidden_size});
  c.w_h = store.add_uniform(prefix + ".W_h", {hidden_size, input_size}, rng);
  c.u_h = store.add_uniform(prefix + ".U_h", {hidden_size, hidden_size}, rng);
  c.b_h = store.add(prefix + ".b_h", {hidden_size});
  return c;
}

Var GruCell::step(Graph& g, Var h_prev, Var x) const {
  if (g.value(x).size() != input_size || g.value(h_prev).size() != hidden_size) {
    throw std::invalid_argument("gru step: expected input " + std::to_string(input_size) +
                                " and hidden " + std::to_string(hidden_size) + ", got " +
                                std::to_string(g.value(x).size()) + " and " +
                                std::to_string(g.value(h_prev).size()));
  }
  const Var z = g.sigmoid(g.linear2(w_z, x, u_z, h_prev, b_z));
  const Var r = g.sigmoid(g.linear2(w_r, x, u_r, h_prev, b_r));
  const Var cand = g.tanh(g.linear2(w_h, x, u_h, g.mul(r, h_prev), b_h));
  // h + z * (cand - h)
  return g.add(h_prev, g.mul(z, g.sub(cand, h_prev)));
}

BiGru BiGru::create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                    std::size_t hidden_size, Rng& rng) {
  BiGru b;
  b.fwd = GruCell::create(store, prefix + ".fwd", input_size, hidden_size, rng);
  b.bwd = GruCell::create(store, prefix + ".bwd", input_size, hidden_size, rng);
  return b;
}

std::vector<Var> BiGru::encode(Graph& g, std::span<const Var> inputs) const {
  return encode(g, inputs, nullptr, nullptr);
}

std::vector<Var> BiGru::encode(Graph& g, std::span<const Var> inputs, Var* last_fwd,
                               Var* last_bwd) const {
  const std::size_t n = inputs.size();
  std::vector<Var> out;
  if (n == 0) return out;
  std::vector<Var> f(n), b(n);
  Var h = g.constant(Tensor({fwd.hidden_size}));
  for (std::size_t k = 0; k < n; ++k) f[k] = h = fwd.step(g, h, inputs[k]);
  h = g.constant(Tensor({bwd.hidden_size}));
  for (std::size_t k = n; k-- > 0;) b[k] = h = bwd.step(g, h, inputs[k]);
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::array<Var, 2> parts{f[k], b[k]};
    out.push_back(g.concat(parts));
  }
  if (last_fwd) *last_fwd = f[n - 1];
  if (last_bwd) *last_bwd = b[0];
  return out;
}

std::vector<double> gru_step(const GruCell& cell, const ParamStore& store,
                             std::span<const double> h_prev, std::span<const double> x) {
  Graph g(store);
  const Var h = g.constant(Tensor::vector({h_prev.begin(), h_prev.end()}));
  const Var in = g.constant(Tensor::vector({x.begin(), x.end()}));
  return g.value(cell.step(g, h, in)).storage();
}

std::vector<std::vector<double>> bigru_encode(const BiGru& enc, const ParamStore& store,
                                              const std::vector<std::vector<double>>& inputs) {
  Graph g(store);
  std::vector<Var> in;
  for (const auto& x : inputs) {
    if (x.size() != inputs.front().size()) {
      throw std::invalid_argument("bigru_encode: inputs of different lengths");
    }
    in.push_back(g.constant(Tensor::vector(x)));
  }
  std::vector<std::vector<double>> out;
  for (Var s : enc.encode(g, in)) out.push_back(g.value(s).storage());
  return out;
}

}  // namespace idiomgen
