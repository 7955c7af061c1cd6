#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>

#include "idiomgen/corpus.hpp"
#include "idiomgen/graph.hpp"
#include "idiomgen/tensor.hpp"

namespace idiomgen {

inline constexpr std::size_t kNumLabels = 3;  // B, I, O

/// Transition scores T[prev][next] plus start/end scores, label order B, I, O.
struct CrfParams {
  Tensor transitions = Tensor::matrix(kNumLabels, kNumLabels);
  std::array<double, kNumLabels> start{};
  std::array<double, kNumLabels> end{};
};

struct ViterbiPath {
  BioSequence labels;
  double score = 0.0;
};

/// start[y1] + sum_t unary[t][yt] + sum_t T[y(t-1)][yt] + end[yn].
double crf_sequence_score(const Tensor& unary, const CrfParams& crf, const BioSequence& labels);

/// log of the sum over all 3^n label sequences, by the forward recurrence.
/// Throws std::invalid_argument for n = 0.
double crf_log_partition(const Tensor& unary, const CrfParams& crf);

/// Exact argmax. Among equal-scoring paths the lexicographically smallest in
/// B < I < O order wins.
ViterbiPath crf_viterbi(const Tensor& unary, const CrfParams& crf);

/// n x 3 node marginals from forward-backward.
Tensor crf_marginals(const Tensor& unary, const CrfParams& crf);

struct CrfPosteriors {
  double log_z = 0.0;
  Tensor node;   // n x 3
  Tensor pair;   // (n-1) x 9, row t is P(y_t = a, y_t+1 = b) at [a*3 + b]
};

/// Forward-backward; optionally restricted to sequences with the given label
/// at one position.
CrfPosteriors crf_posteriors(const Tensor& unary, const CrfParams& crf,
                             std::optional<std::pair<std::size_t, Bio>> clamp = std::nullopt);

/// Per-label token weights for the extractor's marginal cross-entropy term.
inline constexpr std::array<double, kNumLabels> kSpanLabelWeights{0.48, 0.48, 0.04};

/// Negative log-likelihood of gold plus sum_t w[gold_t] * -log P(y_t = gold_t),
/// as a single tape node with an exact backward pass into the unary scores
/// and the transition/start/end parameters.
Var crf_training_loss(Graph& g, Var unary, ParamId transitions, ParamId start, ParamId end,
                      const BioSequence& gold,
                      const std::array<double, kNumLabels>& weights = kSpanLabelWeights);

/// Value of the same loss without a tape.
double crf_training_loss_value(const Tensor& unary, const CrfParams& crf, const BioSequence& gold,
                               const std::array<double, kNumLabels>& weights = kSpanLabelWeights);

}  // namespace idiomgen
