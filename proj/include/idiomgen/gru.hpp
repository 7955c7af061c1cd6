#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/graph.hpp"
#include "idiomgen/params.hpp"
#include "idiomgen/rng.hpp"

namespace idiomgen {

/// z = sigmoid(W_z x + U_z h + b_z)
/// r = sigmoid(W_r x + U_r h + b_r)
/// c = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * c
struct GruCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  ParamId w_z, u_z, b_z;
  ParamId w_r, u_r, b_r;
  ParamId w_h, u_h, b_h;

  static GruCell create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng);

  Var step(Graph& g, Var h_prev, Var x) const;
};

struct BiGru {
  GruCell fwd;
  GruCell bwd;

  static BiGru create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                      std::size_t hidden_size, Rng& rng);

  std::size_t state_size() const { return fwd.hidden_size + bwd.hidden_size; }

  /// State k is forward state at k concatenated with backward state at k.
  std::vector<Var> encode(Graph& g, std::span<const Var> inputs) const;
  /// Same, also exposing the last forward and last backward (position 0) states.
  std::vector<Var> encode(Graph& g, std::span<const Var> inputs, Var* last_fwd,
                          Var* last_bwd) const;
};

/// Value-level wrappers; throw std::invalid_argument on dimension mismatch.
std::vector<double> gru_step(const GruCell& cell, const ParamStore& store,
                             std::span<const double> h_prev, std::span<const double> x);
std::vector<std::vector<double>> bigru_encode(const BiGru& enc, const ParamStore& store,
                                              const std::vector<std::vector<double>>& inputs);

}  // namespace idiomgen
