#include "idiomgen/retrieval.hpp"

#include <numeric>
#include <stdexcept>

#include "idiomgen/metrics.hpp"

namespace idiomgen {

std::string to_string(KeyMode m) { return m == KeyMode::Definition ? "definition" : "idiom"; }

KeyMode key_mode_from_string(const std::string& s) {
  if (s == "definition") return KeyMode::Definition;
  if (s == "idiom") return KeyMode::Idiom;
  throw std::invalid_argument("unknown key mode '" + s + "' (expected definition|idiom)");
}

RetrievalModel::RetrievalModel(Vocabulary vocab, EncoderDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  Rng rng(seed);
  embedding_ = params_.add_uniform("ret.embedding", {vocab_.size(), dims_.embed}, rng);
  encoder_ = BiGru::create(params_, "ret.encoder", dims_.embed, dims_.hidden, rng);
  w_ret_ = params_.add_uniform("ret.W_ret", {1, encoder_.state_size()}, rng);
  b_ret_ = params_.add("ret.b_ret", {1});
}

Var RetrievalModel::encode(Graph& g, std::span<const std::string> sentence,
                           std::span<const std::string> key) const {
  if (sentence.empty()) throw std::invalid_argument("retrieval: empty sentence");
  std::vector<Var> inputs;
  inputs.reserve(sentence.size() + 1 + key.size());
  for (const auto& t : sentence) inputs.push_back(g.embedding(embedding_, vocab_.id(t)));
  inputs.push_back(g.embedding(embedding_, Vocabulary::kSep));
  for (const auto& t : key) inputs.push_back(g.embedding(embedding_, vocab_.id(t)));
  const auto states = encoder_.encode(g, inputs);
  return g.sum(states);
}

Var RetrievalModel::score(Graph& g, Var h_ret) const { return g.affine(w_ret_, b_ret_, h_ret); }

std::vector<double> RetrievalModel::encode_candidate(std::span<const std::string> sentence,
                                                     std::span<const std::string> key) const {
  Graph g(params_);
  return g.value(encode(g, sentence, key)).storage();
}

double RetrievalModel::score(std::span<const double> h_ret) const {
  const Tensor& w = params_.value(w_ret_);
  if (h_ret.size() != w.cols()) throw std::invalid_argument("retrieval score: dimension mismatch");
  return dot(w.values(), h_ret) + params_.value(b_ret_)[0];
}

double RetrievalModel::score_pair(std::span<const std::string> sentence,
                                  std::span<const std::string> key) const {
  Graph g(params_);
  return g.scalar(score(g, encode(g, sentence, key)));
}

const Tokens& key_tokens(const IdiomEntry& idiom, std::size_t sense, KeyMode mode) {
  return mode == KeyMode::Idiom ? idiom.surface : idiom.senses.at(sense);
}

std::vector<RetrievalInstance> make_retrieval_instances(const ParallelPair& pair,
                                                        const Lexicon& lexicon,
                                                        std::size_t negatives, KeyMode mode,
                                                        Rng& rng) {
  const auto gold = lexicon.index_of(pair.idiom_id);
  if (!gold) throw DataError("retrieval: unknown idiom id '" + pair.idiom_id + "'");
  if (negatives >= lexicon.size()) {
    throw std::invalid_argument("retrieval: negatives_per_positive (" + std::to_string(negatives) +
                                ") must be smaller than the lexicon size (" +
                                std::to_string(lexicon.size()) + ")");
  }
  std::vector<RetrievalInstance> out;
  out.reserve(negatives + 1);
  const IdiomEntry& g = lexicon[*gold];
  out.push_back({pair.literal, g.id, key_tokens(g, pair.sense_index, mode), 1.0});
  // Draw from the lexicon with the gold idiom removed.
  for (std::size_t k : rng.sample_without_replacement(lexicon.size() - 1, negatives)) {
    const IdiomEntry& e = lexicon[k >= *gold ? k + 1 : k];
    const std::size_t sense =
        mode == KeyMode::Definition ? static_cast<std::size_t>(rng.below(e.senses.size())) : 0;
    out.push_back({pair.literal, e.id, key_tokens(e, sense, mode), 0.0});
  }
  return out;
}

double retrieval_loss(const RetrievalModel& model, std::span<const RetrievalInstance> instances,
                      ParamStore* grad_sink) {
  if (instances.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(instances.size());
  double total = 0.0;
  for (const auto& inst : instances) {
    Graph g(model.params(), grad_sink);
    const Var loss = g.bce_with_logits(model.score(g, model.encode(g, inst.sentence, inst.key)),
                                       inst.label);
    total += g.scalar(loss);
    if (grad_sink) g.backward(g.scale(loss, inv));
  }
  return total * inv;
}

TrainingReport train_retrieval(RetrievalModel& model, std::span<const ParallelPair> train,
                               const Lexicon& lexicon, const RetrievalTrainOptions& options,
                               std::span<const ParallelPair> validation) {
  if (options.negatives >= lexicon.size()) {
    throw std::invalid_argument("retrieval: negatives_per_positive must be smaller than the lexicon");
  }
  TrainingReport report;
  std::vector<const ParallelPair*> usable;
  for (const auto& p : train) {
    if (!lexicon.find(p.idiom_id) || !sense_of(lexicon, p)) {
      report.warnings.push_back("skipping pair with unresolvable idiom '" + p.idiom_id + "'");
      continue;
    }
    if (p.literal.empty()) continue;
    usable.push_back(&p);
  }

  {
    Rng probe(options.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<RetrievalInstance> all;
    for (const auto* p : usable) {
      auto inst = make_retrieval_instances(*p, lexicon, options.negatives, options.key_mode, probe);
      all.insert(all.end(), inst.begin(), inst.end());
    }
    report.initial_loss = retrieval_loss(model, all, nullptr);
  }

  Rng rng(options.seed);
  ParamStore& store = model.params();
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      std::vector<RetrievalInstance> instances;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + batch); ++k) {
        auto inst = make_retrieval_instances(*usable[order[k]], lexicon, options.negatives,
                                             options.key_mode, rng);
        instances.insert(instances.end(), inst.begin(), inst.end());
      }
      store.zero_grad();
      loss_sum += retrieval_loss(model, instances, &store) * static_cast<double>(instances.size());
      count += instances.size();
      clip_global_norm(store, options.clip_norm);
      adam_step(store, options.lr, 0.9, 0.999, 1e-8);
    }
    report.epoch_loss.push_back(count ? loss_sum / static_cast<double>(count) : 0.0);
    if (options.validate_each_epoch && !validation.empty()) {
      report.validation.push_back(
          retrieval_accuracy_on(model, validation, lexicon, options.key_mode));
    }
  }
  return report;
}

RetrievalResult retrieve_top1(const RetrievalModel& model, std::span<const std::string> sentence,
                              const Lexicon& lexicon, KeyMode mode) {
  if (lexicon.empty()) throw std::invalid_argument("retrieve_top1: empty lexicon");
  RetrievalResult best;
  bool have = false;
  for (std::size_t i = 0; i < lexicon.size(); ++i) {
    const IdiomEntry& e = lexicon[i];
    const std::size_t n_keys = mode == KeyMode::Definition ? e.senses.size() : 1;
    for (std::size_t s = 0; s < n_keys; ++s) {
      const double score = model.score_pair(sentence, key_tokens(e, s, mode));
      ++best.candidates_evaluated;
      if (!have || score > best.score) {
        have = true;
        best.score = score;
        best.idiom_index = i;
        best.idiom_id = e.id;
        best.sense_index = s;
      }
    }
  }
  return best;
}

double retrieval_accuracy_on(const RetrievalModel& model, std::span<const ParallelPair> pairs,
                             const Lexicon& lexicon, KeyMode mode) {
  std::vector<std::string> predicted, gold;
  for (const auto& p : pairs) {
    predicted.push_back(retrieve_top1(model, p.literal, lexicon, mode).idiom_id);
    gold.push_back(p.idiom_id);
  }
  return retrieval_accuracy(predicted, gold);
}

}  // namespace idiomgen
