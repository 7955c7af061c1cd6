#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/corpus.hpp"
#include "idiomgen/graph.hpp"
#include "idiomgen/gru.hpp"
#include "idiomgen/params.hpp"
#include "idiomgen/retrieval.hpp"

namespace idiomgen {

struct GeneratorDims {
  std::size_t embed = 128;
  std::size_t indicator = 32;
  std::size_t label = 32;
  std::size_t hidden = 256;  // decoder; each encoder direction gets hidden / 2
};

/// Encoder input [idiom, <sep>, literal] with per-token copy indicators.
/// Unguided inputs hold a constant indicator and always feed label 0.
struct GeneratorInput {
  Tokens tokens;
  std::vector<std::uint8_t> indicators;
  bool guided = true;

  friend bool operator==(const GeneratorInput&, const GeneratorInput&) = default;
};

/// Idiom tokens get 1, <sep> gets 0, literal tokens 0 inside the span and 1
/// outside.
GeneratorInput build_guided_input(std::span<const std::string> idiom,
                                  std::span<const std::string> literal, std::optional<Span> span);

/// [idiom, <sep>, literal with the span removed], every indicator 0.
GeneratorInput build_unguided_input(std::span<const std::string> idiom,
                                    std::span<const std::string> literal, std::optional<Span> span);

/// Encoder states plus the per-decode projections derived from them.
struct Memory {
  Var states;     // n x He
  Var att_keys;   // n x H, rows M_k W_att
  Var copy_keys;  // n x H, rows tanh(M_k U)
  Var h0;         // initial decoder state
  std::size_t length = 0;
};

/// Normalized output distribution of one decode step over the extended
/// vocabulary: the model vocabulary followed by input tokens it lacks.
struct StepDistribution {
  std::vector<double> probs;
  double p_copy = 0.0;
  double p_gen = 0.0;
};

/// Extended-vocabulary view of one input.
struct InputVocab {
  std::vector<std::size_t> word_ids;      // vocabulary id per position (<unk> for OOV)
  std::vector<std::size_t> extended_ids;  // extended id per position
  std::vector<std::string> oov_tokens;    // extended ids vocab.size() + i
};

struct DecodeState {
  Var h;
  std::string y_prev;
  std::uint8_t label_prev = 0;
  std::optional<Var> psi_copy_prev;  // absent before the first step
};

class GeneratorModel {
 public:
  GeneratorModel(Vocabulary vocab, GeneratorDims dims, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const GeneratorDims& dims() const { return dims_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t encoder_state_size() const { return encoder_.state_size(); }
  std::size_t decoder_input_size() const { return decoder_.input_size; }

  InputVocab input_vocab(const GeneratorInput& input) const;
  const std::string& extended_token(const InputVocab& iv, std::size_t extended_id) const;

  /// Per token w_k ++ c_k through the BiGRU, and the t = 0 decoder state.
  Memory encode(Graph& g, const GeneratorInput& input) const;
  /// Projections for an arbitrary memory matrix (used by encode and tests).
  Memory make_memory(Graph& g, Var states) const;
  /// Value of the encoder states, one row per input token.
  Tensor encode_input(const GeneratorInput& input) const;

  /// softmax_k(h . W_att M_k) weighted sum of memory rows. Throws on empty memory.
  Var attentive_read(Graph& g, const Memory& mem, Var h) const;
  /// Copy-score weighted mean of the memory rows whose token equals y_prev;
  /// zero when none match or no previous scores exist.
  Var selective_read(Graph& g, const Memory& mem, std::span<const std::string> input_tokens,
                     const std::string& y_prev, std::optional<Var> psi_copy_prev) const;

  Var copy_scores(Graph& g, const Memory& mem, Var h) const;  // n
  Var gen_scores(Graph& g, Var h) const;                      // |V|

  /// Decoder update from the previous state; returns the new state with its
  /// copy scores. y/label are set by the caller once a token is chosen.
  DecodeState advance(Graph& g, const Memory& mem, const GeneratorInput& input,
                      const DecodeState& state, Var* psi_gen_out) const;

  DecodeState initial_state(const Memory& mem) const;

  ParamId word_embedding_id() const { return word_embedding_; }
  ParamId copy_embedding_id() const { return copy_embedding_; }
  ParamId label_embedding_id() const { return label_embedding_; }
  ParamId attention_id() const { return w_att_; }
  ParamId copy_matrix_id() const { return u_copy_; }
  ParamId gen_matrix_id() const { return w_gen_; }
  const BiGru& encoder() const { return encoder_; }
  const GruCell& decoder() const { return decoder_; }

 private:
  Vocabulary vocab_;
  GeneratorDims dims_;
  ParamStore params_;
  ParamId word_embedding_;
  ParamId copy_embedding_;
  ParamId label_embedding_;
  BiGru encoder_;
  ParamId w_init_;
  ParamId b_init_;
  ParamId w_att_;
  ParamId u_copy_;
  ParamId w_gen_;
  GruCell decoder_;
};

/// Joint softmax of exp-scores over copy positions and vocabulary entries,
/// collapsed by surface token.
StepDistribution step_distribution(std::span<const double> psi_copy, std::span<const double> psi_gen,
                                   const InputVocab& iv, std::size_t vocab_size);

/// 1 iff p_copy > p_gen.
std::uint8_t infer_label(const StepDistribution& dist);

/// Argmax extended id; ties go to the smaller id.
std::size_t argmax_token(const StepDistribution& dist);

/// One full decoder step: advance, then the distribution at the new state.
DecodeState decode_step(const GeneratorModel& model, Graph& g, const Memory& mem,
                        const GeneratorInput& input, const InputVocab& iv, const DecodeState& state,
                        StepDistribution* dist_out);

struct TeacherForcedResult {
  double loss = 0.0;  // summed over target tokens
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// NLL of reference ++ <eos> with gold previous tokens and gold labels
/// (label 1 iff the token occurs in the input). Backprops loss * grad_scale
/// into the sink when given.
TeacherForcedResult teacher_forced(const GeneratorModel& model, const GeneratorInput& input,
                                   std::span<const std::string> reference, ParamStore* grad_sink,
                                   double grad_scale = 1.0);

Tokens greedy_decode(const GeneratorModel& model, const GeneratorInput& input,
                     std::size_t max_len = 40);

/// Length-normalized beam search; beam 1 is greedy decoding.
Tokens beam_decode(const GeneratorModel& model, const GeneratorInput& input, std::size_t beam = 4,
                   std::size_t max_len = 40);

struct GeneratorExample {
  GeneratorInput input;
  Tokens reference;
};

/// Inputs built from the gold idiom surface and gold span.
std::vector<GeneratorExample> make_generator_examples(std::span<const ParallelPair> pairs,
                                                      const Lexicon& lexicon, bool guided,
                                                      std::vector<std::string>* warnings = nullptr);

struct GeneratorTrainOptions {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch = 32;
  double clip_norm = 5.0;
  bool validate_each_epoch = true;
  std::size_t max_len = 40;
};

TrainingReport train_generator(GeneratorModel& model, std::span<const GeneratorExample> train,
                               const GeneratorTrainOptions& options,
                               std::span<const GeneratorExample> validation = {});

/// Token accuracy under teacher forcing (the <eos> step included).
double teacher_forced_accuracy(const GeneratorModel& model, std::span<const GeneratorExample> examples);

/// literal[0, start) ++ idiom ++ literal[end, n); the literal when span is absent.
Tokens rule_based_generate(std::span<const std::string> literal, std::optional<Span> span,
                           std::span<const std::string> idiom);

}  // namespace idiomgen
