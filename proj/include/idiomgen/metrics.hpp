#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/corpus.hpp"

namespace idiomgen {

/// Corpus BLEU-4 with brevity penalty; precisions for n >= 2 use add-one
/// smoothing. Throws std::invalid_argument on empty or misaligned lists.
double bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

enum class RougeVariant { One, Two, L };

/// ROUGE F-measure: clipped n-gram overlap for 1/2, LCS for L.
double rouge(const Tokens& hypothesis, const Tokens& reference, RougeVariant variant);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact-match alignment with the most matches, then the fewest chunks.
MeteorAlignment meteor_align(const Tokens& hypothesis, const Tokens& reference);

/// F_mean = P R / (0.9 P + 0.1 R), penalty = 0.5 (chunks / matches)^3.
double meteor(const Tokens& hypothesis, const Tokens& reference);

/// Macro-averaged token-overlap F1; an absent prediction scores 0.
double span_f1(std::span<const std::optional<Span>> predictions, std::span<const Span> golds);
double span_f1_single(const std::optional<Span>& prediction, const Span& gold);

double retrieval_accuracy(std::span<const std::string> predicted_ids,
                          std::span<const std::string> gold_ids);

struct PartAccuracy {
  double idiom_part = 0.0;
  double non_idiom_part = 0.0;
};

/// idiom_part: share of idiom tokens (multiset) found in the output.
/// non_idiom_part: share of literal tokens outside the span found in the output.
PartAccuracy part_accuracy(std::span<const Tokens> outputs, std::span<const Tokens> literals,
                           std::span<const Tokens> idioms, std::span<const Span> spans);

/// Corpus BLEU within each rigidity level; unlabeled idioms are skipped.
std::map<int, double> stratify_by_rigidity(std::span<const Tokens> hypotheses,
                                           std::span<const Tokens> references,
                                           std::span<const std::string> idiom_ids,
                                           const Lexicon& lexicon);

struct MetricReport {
  std::size_t instances = 0;
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
  double span_f1 = 0.0;
  double retrieval_accuracy = 0.0;
  double idiom_part_acc = 0.0;
  double non_idiom_part_acc = 0.0;
  std::map<int, double> by_rigidity;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Values in [0, 1] plus a "percent" object with the same numbers x100.
std::string report_to_json(const MetricReport& report, int indent = 2);

}  // namespace idiomgen
