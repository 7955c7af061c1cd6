#include "idiomgen/selfcheck.hpp"

#include <stdexcept>

#include "idiomgen/extractor.hpp"
#include "idiomgen/generator.hpp"
#include "idiomgen/retrieval.hpp"

namespace idiomgen {

namespace {

// Large enough that entries with gradients near 1e-7 rise above the
// rounding of a loss around 10, small enough for the truncation error.
constexpr double kCheckEps = 1e-4;

Vocabulary toy_vocab() {
  std::vector<std::string> tokens{"<pad>", "<unk>", "<sep>", "<eos>"};
  for (int i = 0; i < 16; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocabulary(tokens);
}

/// Wider than the training init so that every entry has a gradient well
/// above finite-difference noise.
void reinitialize(ParamStore& store, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : store.all()) {
    for (double& v : p.value.values()) v = rng.uniform(-0.5, 0.5);
  }
}

GradCheckResult check_retrieval(std::uint64_t seed) {
  RetrievalModel model(toy_vocab(), EncoderDims{4, 3}, seed);
  reinitialize(model.params(), seed + 1);
  const std::vector<RetrievalInstance> instances{
      {{"w1", "w2", "w3"}, "a", {"w4", "w5"}, 1.0},
      {{"w1", "w2", "w3"}, "b", {"w6", "w7", "w8"}, 0.0},
      {{"w1", "w2", "w3"}, "c", {"w9"}, 0.0},
  };
  return grad_check(
      [&](const ParamStore&, ParamStore* sink) { return retrieval_loss(model, instances, sink); },
      model.params(), kCheckEps);
}

GradCheckResult check_extractor(std::uint64_t seed) {
  ExtractorModel model(toy_vocab(), EncoderDims{4, 3}, seed);
  reinitialize(model.params(), seed + 1);
  const Tokens sentence{"w1", "w2", "w3", "w4", "w5"};
  const Tokens context{"w6", "w7"};
  const BioSequence gold = derive_bio(sentence.size(), Span{1, 3});
  return grad_check(
      [&](const ParamStore&, ParamStore* sink) {
        return extraction_loss(model, sentence, context, gold, sink);
      },
      model.params(), kCheckEps);
}

GradCheckResult check_generator(std::uint64_t seed) {
  GeneratorModel model(toy_vocab(), GeneratorDims{5, 3, 3, 8}, seed);
  reinitialize(model.params(), seed + 1);
  // "zz" is outside the vocabulary, so it is reachable only by copying.
  const GeneratorInput input = build_guided_input(Tokens{"w1", "w2"}, Tokens{"w3", "zz"}, Span{1, 2});
  const Tokens reference{"w3", "w1", "w2", "zz", "w9"};
  return grad_check(
      [&](const ParamStore&, ParamStore* sink) {
        return teacher_forced(model, input, reference, sink).loss;
      },
      model.params(), kCheckEps);
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{"retrieval", "extractor", "generator"};
  return names;
}

GradCheckResult gradcheck_module(const std::string& module, std::uint64_t seed) {
  if (module == "retrieval") return check_retrieval(seed);
  if (module == "extractor") return check_extractor(seed);
  if (module == "generator") return check_generator(seed);
  throw std::invalid_argument("unknown module '" + module + "' (expected retrieval|extractor|generator)");
}

}  // namespace idiomgen
