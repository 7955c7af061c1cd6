#include "idiomgen/extractor.hpp"

#include <numeric>
#include <stdexcept>

#include "idiomgen/metrics.hpp"

namespace idiomgen {

std::string to_string(ExtractorContext c) {
  switch (c) {
    case ExtractorContext::Definition: return "definition";
    case ExtractorContext::Idiom: return "idiom";
    case ExtractorContext::None: return "none";
  }
  return "definition";
}

ExtractorContext extractor_context_from_string(const std::string& s) {
  if (s == "definition") return ExtractorContext::Definition;
  if (s == "idiom") return ExtractorContext::Idiom;
  if (s == "none") return ExtractorContext::None;
  throw std::invalid_argument("unknown extractor context '" + s + "' (expected definition|idiom|none)");
}

ExtractorModel::ExtractorModel(Vocabulary vocab, EncoderDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  Rng rng(seed);
  embedding_ = params_.add_uniform("ext.embedding", {vocab_.size(), dims_.embed}, rng);
  encoder_ = BiGru::create(params_, "ext.encoder", dims_.embed, dims_.hidden, rng);
  w_unary_ = params_.add_uniform("ext.W_unary", {kNumLabels, encoder_.state_size()}, rng);
  b_unary_ = params_.add("ext.b_unary", {kNumLabels});
  transitions_ = params_.add("ext.crf.transitions", {kNumLabels, kNumLabels});
  start_ = params_.add("ext.crf.start", {kNumLabels});
  end_ = params_.add("ext.crf.end", {kNumLabels});
}

Var ExtractorModel::unary(Graph& g, std::span<const std::string> sentence,
                          std::span<const std::string> context) const {
  if (sentence.empty()) throw std::invalid_argument("extractor: empty sentence");
  std::vector<Var> inputs;
  inputs.reserve(sentence.size() + 1 + context.size());
  for (const auto& t : sentence) inputs.push_back(g.embedding(embedding_, vocab_.id(t)));
  inputs.push_back(g.embedding(embedding_, Vocabulary::kSep));
  for (const auto& t : context) inputs.push_back(g.embedding(embedding_, vocab_.id(t)));
  const auto states = encoder_.encode(g, inputs);
  std::vector<Var> rows;
  rows.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) rows.push_back(g.affine(w_unary_, b_unary_, states[i]));
  return g.stack(rows);
}

Tensor ExtractorModel::unary_scores(std::span<const std::string> sentence,
                                    std::span<const std::string> context) const {
  Graph g(params_);
  return g.value(unary(g, sentence, context));
}

CrfParams ExtractorModel::crf() const {
  CrfParams c;
  c.transitions = params_.value(transitions_);
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    c.start[y] = params_.value(start_)[y];
    c.end[y] = params_.value(end_)[y];
  }
  return c;
}

double extraction_loss(const ExtractorModel& model, std::span<const std::string> sentence,
                       std::span<const std::string> context, const BioSequence& gold,
                       ParamStore* grad_sink, double grad_scale) {
  Graph g(model.params(), grad_sink);
  const Var loss = crf_training_loss(g, model.unary(g, sentence, context), model.transitions_id(),
                                     model.start_id(), model.end_id(), gold);
  if (grad_sink) g.backward(grad_scale == 1.0 ? loss : g.scale(loss, grad_scale));
  return g.scalar(loss);
}

const Tokens* extractor_context_of(const Lexicon& lexicon, const ParallelPair& pair,
                                   ExtractorContext mode) {
  static const Tokens kEmpty;
  const IdiomEntry* e = lexicon.find(pair.idiom_id);
  switch (mode) {
    case ExtractorContext::Definition: return e ? sense_of(lexicon, pair) : nullptr;
    case ExtractorContext::Idiom: return e ? &e->surface : nullptr;
    case ExtractorContext::None: return &kEmpty;
  }
  return nullptr;
}

TrainingReport train_extractor(ExtractorModel& model, std::span<const ParallelPair> train,
                               const Lexicon& lexicon, const ExtractorTrainOptions& options,
                               std::span<const ParallelPair> validation) {
  TrainingReport report;
  struct Item {
    const ParallelPair* pair;
    const Tokens* context;
    BioSequence gold;
  };
  std::vector<Item> items;
  for (const auto& p : train) {
    const Tokens* ctx = extractor_context_of(lexicon, p, options.context);
    if (!ctx) {
      report.warnings.push_back("skipping pair without resolvable definition for '" + p.idiom_id + "'");
      continue;
    }
    if (p.literal.empty()) continue;
    items.push_back({&p, ctx, derive_bio(p)});
  }

  double initial = 0.0;
  for (const auto& it : items) initial += extraction_loss(model, it.pair->literal, *it.context, it.gold, nullptr);
  report.initial_loss = items.empty() ? 0.0 : initial / static_cast<double>(items.size());

  Rng rng(options.seed);
  ParamStore& store = model.params();
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      store.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const Item& it = items[order[k]];
        loss_sum += extraction_loss(model, it.pair->literal, *it.context, it.gold, &store, inv);
      }
      clip_global_norm(store, options.clip_norm);
      adam_step(store, options.lr, 0.9, 0.999, 1e-8);
    }
    report.epoch_loss.push_back(items.empty() ? 0.0 : loss_sum / static_cast<double>(items.size()));
    if (options.validate_each_epoch && !validation.empty()) {
      report.validation.push_back(span_f1_on(model, validation, lexicon, options.context));
    }
  }
  return report;
}

BioSequence repair_labels(const BioSequence& labels, const Tensor& unary) {
  struct Run {
    std::size_t start, end;
    double score;
  };
  std::vector<Run> runs;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const Bio b = labels[t];
    if (b == Bio::O) continue;
    const bool opens = b == Bio::B || t == 0 || labels[t - 1] == Bio::O;
    if (opens) runs.push_back({t, t, 0.0});
    runs.back().end = t + 1;
    runs.back().score += unary.at(t, static_cast<std::size_t>(b));
  }
  BioSequence out(labels.size(), Bio::O);
  if (runs.empty()) return out;
  const Run* best = &runs.front();
  for (const auto& r : runs) {
    if (r.score > best->score) best = &r;
  }
  out[best->start] = Bio::B;
  for (std::size_t t = best->start + 1; t < best->end; ++t) out[t] = Bio::I;
  return out;
}

SpanPrediction extract_span(const ExtractorModel& model, std::span<const std::string> sentence,
                            std::span<const std::string> context) {
  const Tensor unary = model.unary_scores(sentence, context);
  const ViterbiPath path = crf_viterbi(unary, model.crf());
  SpanPrediction pred;
  pred.score = path.score;
  pred.labels = repair_labels(path.labels, unary);
  pred.span = span_from_bio(pred.labels);
  return pred;
}

double span_f1_on(const ExtractorModel& model, std::span<const ParallelPair> pairs,
                  const Lexicon& lexicon, ExtractorContext mode) {
  std::vector<std::optional<Span>> predicted;
  std::vector<Span> gold;
  for (const auto& p : pairs) {
    const Tokens* ctx = extractor_context_of(lexicon, p, mode);
    if (!ctx || p.literal.empty()) continue;
    predicted.push_back(extract_span(model, p.literal, *ctx).span);
    gold.push_back(p.span);
  }
  return span_f1(predicted, gold);
}

}  // namespace idiomgen
