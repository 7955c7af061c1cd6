#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/corpus.hpp"
#include "idiomgen/crf.hpp"
#include "idiomgen/graph.hpp"
#include "idiomgen/gru.hpp"
#include "idiomgen/params.hpp"
#include "idiomgen/retrieval.hpp"

namespace idiomgen {

/// Text appended after <sep> in the extractor input.
enum class ExtractorContext { Definition, Idiom, None };

std::string to_string(ExtractorContext c);
ExtractorContext extractor_context_from_string(const std::string& s);

/// BiGRU over [sentence, <sep>, context] with a 3-way unary projection on the
/// sentence positions and a linear-chain CRF on top.
class ExtractorModel {
 public:
  ExtractorModel(Vocabulary vocab, EncoderDims dims, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderDims& dims() const { return dims_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// n x 3 unary matrix on the tape; throws on an empty sentence.
  Var unary(Graph& g, std::span<const std::string> sentence,
            std::span<const std::string> context) const;
  Tensor unary_scores(std::span<const std::string> sentence,
                      std::span<const std::string> context) const;
  CrfParams crf() const;

  ParamId transitions_id() const { return transitions_; }
  ParamId start_id() const { return start_; }
  ParamId end_id() const { return end_; }
  ParamId unary_weight_id() const { return w_unary_; }
  ParamId unary_bias_id() const { return b_unary_; }
  ParamId embedding_id() const { return embedding_; }
  const BiGru& encoder() const { return encoder_; }

 private:
  Vocabulary vocab_;
  EncoderDims dims_;
  ParamStore params_;
  ParamId embedding_;
  BiGru encoder_;
  ParamId w_unary_;
  ParamId b_unary_;
  ParamId transitions_;
  ParamId start_;
  ParamId end_;
};

/// Combined CRF NLL and weighted marginal cross-entropy of one sentence;
/// backprops into the sink when given.
double extraction_loss(const ExtractorModel& model, std::span<const std::string> sentence,
                       std::span<const std::string> context, const BioSequence& gold,
                       ParamStore* grad_sink, double grad_scale = 1.0);

struct ExtractorTrainOptions {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch = 8;
  ExtractorContext context = ExtractorContext::Definition;
  double clip_norm = 5.0;
  bool validate_each_epoch = true;
};

/// Context tokens for a pair under the given mode; nullptr when the pair's
/// definition cannot be resolved.
const Tokens* extractor_context_of(const Lexicon& lexicon, const ParallelPair& pair,
                                   ExtractorContext mode);

TrainingReport train_extractor(ExtractorModel& model, std::span<const ParallelPair> train,
                               const Lexicon& lexicon, const ExtractorTrainOptions& options,
                               std::span<const ParallelPair> validation = {});

struct SpanPrediction {
  BioSequence labels;
  std::optional<Span> span;
  double score = 0.0;  // Viterbi path score before repair
};

/// Keeps the single B/I run with the highest summed unary score (the earlier
/// one on ties) and relabels everything else O. A run starts at a B, or at an
/// I that follows O or the sentence start.
BioSequence repair_labels(const BioSequence& labels, const Tensor& unary);

SpanPrediction extract_span(const ExtractorModel& model, std::span<const std::string> sentence,
                            std::span<const std::string> context);

double span_f1_on(const ExtractorModel& model, std::span<const ParallelPair> pairs,
                  const Lexicon& lexicon, ExtractorContext mode);

}  // namespace idiomgen
