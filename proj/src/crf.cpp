#include "idiomgen/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace idiomgen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t L = kNumLabels;

void check_unary(const Tensor& unary) {
  if (unary.rank() != 2 || unary.cols() != L) {
    throw std::invalid_argument("crf: unary scores must be n x 3");
  }
  if (unary.rows() == 0) throw std::invalid_argument("crf: empty sequence");
}

double lse3(double a, double b, double c) {
  const std::array<double, 3> xs{a, b, c};
  return log_sum_exp(xs);
}

std::size_t idx(Bio b) { return static_cast<std::size_t>(b); }

Tensor masked_unary(const Tensor& unary, std::optional<std::pair<std::size_t, Bio>> clamp) {
  if (!clamp) return unary;
  Tensor u = unary;
  for (std::size_t y = 0; y < L; ++y) {
    if (y != idx(clamp->second)) u.at(clamp->first, y) = kNegInf;
  }
  return u;
}

}  // namespace

double crf_sequence_score(const Tensor& unary, const CrfParams& crf, const BioSequence& labels) {
  check_unary(unary);
  if (labels.size() != unary.rows()) throw std::invalid_argument("crf: label length mismatch");
  double s = crf.start[idx(labels.front())] + crf.end[idx(labels.back())];
  for (std::size_t t = 0; t < labels.size(); ++t) {
    s += unary.at(t, idx(labels[t]));
    if (t > 0) s += crf.transitions.at(idx(labels[t - 1]), idx(labels[t]));
  }
  return s;
}

CrfPosteriors crf_posteriors(const Tensor& unary_in, const CrfParams& crf,
                             std::optional<std::pair<std::size_t, Bio>> clamp) {
  check_unary(unary_in);
  const Tensor unary = masked_unary(unary_in, clamp);
  const std::size_t n = unary.rows();
  const Tensor& T = crf.transitions;

  Tensor alpha = Tensor::matrix(n, L);
  Tensor beta = Tensor::matrix(n, L);
  for (std::size_t y = 0; y < L; ++y) alpha.at(0, y) = crf.start[y] + unary.at(0, y);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < L; ++y) {
      alpha.at(t, y) = unary.at(t, y) + lse3(alpha.at(t - 1, 0) + T.at(0, y),
                                             alpha.at(t - 1, 1) + T.at(1, y),
                                             alpha.at(t - 1, 2) + T.at(2, y));
    }
  }
  for (std::size_t y = 0; y < L; ++y) beta.at(n - 1, y) = crf.end[y];
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      beta.at(t, y) = lse3(T.at(y, 0) + unary.at(t + 1, 0) + beta.at(t + 1, 0),
                           T.at(y, 1) + unary.at(t + 1, 1) + beta.at(t + 1, 1),
                           T.at(y, 2) + unary.at(t + 1, 2) + beta.at(t + 1, 2));
    }
  }
  CrfPosteriors post;
  post.log_z = lse3(alpha.at(n - 1, 0) + crf.end[0], alpha.at(n - 1, 1) + crf.end[1],
                    alpha.at(n - 1, 2) + crf.end[2]);
  post.node = Tensor::matrix(n, L);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t y = 0; y < L; ++y) {
      post.node.at(t, y) = std::exp(alpha.at(t, y) + beta.at(t, y) - post.log_z);
    }
  }
  post.pair = Tensor::matrix(n > 0 ? n - 1 : 0, L * L);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        post.pair.at(t, a * L + b) = std::exp(alpha.at(t, a) + T.at(a, b) + unary.at(t + 1, b) +
                                              beta.at(t + 1, b) - post.log_z);
      }
    }
  }
  return post;
}

double crf_log_partition(const Tensor& unary, const CrfParams& crf) {
  check_unary(unary);
  const std::size_t n = unary.rows();
  const Tensor& T = crf.transitions;
  std::array<double, L> alpha{};
  for (std::size_t y = 0; y < L; ++y) alpha[y] = crf.start[y] + unary.at(0, y);
  for (std::size_t t = 1; t < n; ++t) {
    std::array<double, L> next{};
    for (std::size_t y = 0; y < L; ++y) {
      next[y] = unary.at(t, y) +
                lse3(alpha[0] + T.at(0, y), alpha[1] + T.at(1, y), alpha[2] + T.at(2, y));
    }
    alpha = next;
  }
  return lse3(alpha[0] + crf.end[0], alpha[1] + crf.end[1], alpha[2] + crf.end[2]);
}

ViterbiPath crf_viterbi(const Tensor& unary, const CrfParams& crf) {
  check_unary(unary);
  const std::size_t n = unary.rows();
  const Tensor& T = crf.transitions;
  // best[t][y]: max score of the suffix t..n-1 given y_t = y (unary, later
  // transitions and end included). Decoding front-to-back with lowest-index
  // ties then yields the lexicographically smallest optimal path.
  Tensor best = Tensor::matrix(n, L);
  for (std::size_t y = 0; y < L; ++y) best.at(n - 1, y) = unary.at(n - 1, y) + crf.end[y];
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      double m = kNegInf;
      for (std::size_t z = 0; z < L; ++z) m = std::max(m, T.at(y, z) + best.at(t + 1, z));
      best.at(t, y) = unary.at(t, y) + m;
    }
  }
  ViterbiPath path;
  path.labels.resize(n);
  std::size_t prev = 0;
  double total = kNegInf;
  for (std::size_t y = 0; y < L; ++y) {
    const double s = crf.start[y] + best.at(0, y);
    if (s > total) {
      total = s;
      prev = y;
    }
  }
  path.score = total;
  path.labels[0] = static_cast<Bio>(prev);
  for (std::size_t t = 1; t < n; ++t) {
    double m = kNegInf;
    std::size_t arg = 0;
    for (std::size_t y = 0; y < L; ++y) {
      const double s = T.at(prev, y) + best.at(t, y);
      if (s > m) {
        m = s;
        arg = y;
      }
    }
    path.labels[t] = static_cast<Bio>(arg);
    prev = arg;
  }
  return path;
}

Tensor crf_marginals(const Tensor& unary, const CrfParams& crf) {
  return crf_posteriors(unary, crf).node;
}

double crf_training_loss_value(const Tensor& unary, const CrfParams& crf, const BioSequence& gold,
                               const std::array<double, kNumLabels>& weights) {
  const double log_z = crf_log_partition(unary, crf);
  double loss = log_z - crf_sequence_score(unary, crf, gold);
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const double w = weights[idx(gold[t])];
    if (w == 0.0) continue;
    Tensor clamped = masked_unary(unary, std::make_pair(t, gold[t]));
    loss += w * (log_z - crf_log_partition(clamped, crf));
  }
  return loss;
}

Var crf_training_loss(Graph& g, Var unary_var, ParamId transitions, ParamId start, ParamId end,
                      const BioSequence& gold, const std::array<double, kNumLabels>& weights) {
  const Tensor& unary = g.value(unary_var);
  check_unary(unary);
  const std::size_t n = unary.rows();
  if (gold.size() != n) throw std::invalid_argument("crf_training_loss: label length mismatch");

  CrfParams crf;
  crf.transitions = g.params().value(transitions);
  for (std::size_t y = 0; y < L; ++y) {
    crf.start[y] = g.params().value(start)[y];
    crf.end[y] = g.params().value(end)[y];
  }

  // Gradient w.r.t. every score = sum of coefficient * posterior feature
  // expectations; the gold path contributes its indicator features.
  Tensor d_unary = Tensor::matrix(n, L);
  Tensor d_trans = Tensor::matrix(L, L);
  std::array<double, L> d_start{}, d_end{};
  auto add_expectations = [&](const CrfPosteriors& p, double coef) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t y = 0; y < L; ++y) d_unary.at(t, y) += coef * p.node.at(t, y);
    }
    for (std::size_t t = 0; t + 1 < n; ++t) {
      for (std::size_t k = 0; k < L * L; ++k) d_trans[k] += coef * p.pair.at(t, k);
    }
    for (std::size_t y = 0; y < L; ++y) {
      d_start[y] += coef * p.node.at(0, y);
      d_end[y] += coef * p.node.at(n - 1, y);
    }
  };

  const CrfPosteriors full = crf_posteriors(unary, crf);
  double loss = full.log_z - crf_sequence_score(unary, crf, gold);
  double full_coef = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double w = weights[idx(gold[t])];
    if (w == 0.0) continue;
    const CrfPosteriors clamped = crf_posteriors(unary, crf, std::make_pair(t, gold[t]));
    loss += w * (full.log_z - clamped.log_z);
    full_coef += w;
    add_expectations(clamped, -w);
  }
  add_expectations(full, full_coef);
  for (std::size_t t = 0; t < n; ++t) {
    d_unary.at(t, idx(gold[t])) -= 1.0;
    if (t > 0) d_trans.at(idx(gold[t - 1]), idx(gold[t])) -= 1.0;
  }
  d_start[idx(gold.front())] -= 1.0;
  d_end[idx(gold.back())] -= 1.0;

  return g.custom(Tensor::vector({loss}), [&g, unary_var, transitions, start, end,
                                           d_unary = std::move(d_unary), d_trans = std::move(d_trans),
                                           d_start, d_end](std::span<const double> out_grad) {
    const double go = out_grad[0];
    auto scaled = [go](std::span<const double> src) {
      std::vector<double> v(src.begin(), src.end());
      for (double& x : v) x *= go;
      return v;
    };
    g.accumulate_grad(unary_var, scaled(d_unary.values()));
    g.accumulate_param_grad(transitions, scaled(d_trans.values()));
    g.accumulate_param_grad(start, scaled(d_start));
    g.accumulate_param_grad(end, scaled(d_end));
  });
}

}  // namespace idiomgen
