#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/corpus.hpp"
#include "idiomgen/graph.hpp"
#include "idiomgen/gru.hpp"
#include "idiomgen/params.hpp"

namespace idiomgen {

/// Which text of an idiom is paired with the sentence.
enum class KeyMode { Definition, Idiom };

std::string to_string(KeyMode m);
KeyMode key_mode_from_string(const std::string& s);

struct EncoderDims {
  std::size_t embed = 64;
  std::size_t hidden = 64;  // per direction
};

/// Cross-encoder over [sentence, <sep>, key]: token embeddings, a BiGRU, sum
/// pooling over all positions, and a linear scoring head.
class RetrievalModel {
 public:
  RetrievalModel(Vocabulary vocab, EncoderDims dims, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderDims& dims() const { return dims_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t state_size() const { return encoder_.state_size(); }

  Var encode(Graph& g, std::span<const std::string> sentence, std::span<const std::string> key) const;
  Var score(Graph& g, Var h_ret) const;

  std::vector<double> encode_candidate(std::span<const std::string> sentence,
                                       std::span<const std::string> key) const;
  /// W_ret . h_ret + b_ret; throws std::invalid_argument on size mismatch.
  double score(std::span<const double> h_ret) const;
  double score_pair(std::span<const std::string> sentence, std::span<const std::string> key) const;

  ParamId embedding_id() const { return embedding_; }
  ParamId weight_id() const { return w_ret_; }
  ParamId bias_id() const { return b_ret_; }
  const BiGru& encoder() const { return encoder_; }

 private:
  Vocabulary vocab_;
  EncoderDims dims_;
  ParamStore params_;
  ParamId embedding_;
  BiGru encoder_;
  ParamId w_ret_;
  ParamId b_ret_;
};

struct RetrievalInstance {
  Tokens sentence;
  std::string idiom_id;
  Tokens key;
  double label = 0.0;
};

struct RetrievalTrainOptions {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t negatives = 100;
  std::size_t batch = 8;  // positives (with their negatives) per update
  KeyMode key_mode = KeyMode::Definition;
  double clip_norm = 5.0;
  bool validate_each_epoch = true;
};

struct TrainingReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  /// Validation retrieval accuracy, span F1 or BLEU depending on the model.
  std::vector<double> validation;
  std::vector<std::string> warnings;
};

const Tokens& key_tokens(const IdiomEntry& idiom, std::size_t sense, KeyMode mode);

/// One positive and `negatives` negatives per pair; negatives are idioms drawn
/// uniformly without replacement from the non-gold idioms (random sense in
/// definition mode).
std::vector<RetrievalInstance> make_retrieval_instances(const ParallelPair& pair,
                                                        const Lexicon& lexicon,
                                                        std::size_t negatives, KeyMode mode,
                                                        Rng& rng);

/// Mean binary cross-entropy over the instances; with a sink, also backprops
/// the mean.
double retrieval_loss(const RetrievalModel& model, std::span<const RetrievalInstance> instances,
                      ParamStore* grad_sink);

TrainingReport train_retrieval(RetrievalModel& model, std::span<const ParallelPair> train,
                               const Lexicon& lexicon, const RetrievalTrainOptions& options,
                               std::span<const ParallelPair> validation = {});

struct RetrievalResult {
  std::size_t idiom_index = 0;
  std::string idiom_id;
  std::size_t sense_index = 0;
  double score = 0.0;
  std::size_t candidates_evaluated = 0;
};

/// Scores every candidate key and returns the argmax. In definition mode each
/// sense is a candidate and an idiom scores its best sense. Ties go to the
/// earlier idiom (then the earlier sense).
RetrievalResult retrieve_top1(const RetrievalModel& model, std::span<const std::string> sentence,
                              const Lexicon& lexicon, KeyMode mode);

double retrieval_accuracy_on(const RetrievalModel& model, std::span<const ParallelPair> pairs,
                             const Lexicon& lexicon, KeyMode mode);

}  // namespace idiomgen
