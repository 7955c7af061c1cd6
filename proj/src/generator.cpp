#include "idiomgen/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "idiomgen/metrics.hpp"

namespace idiomgen {

namespace {

const std::string kSepString(Vocabulary::kSepToken);
const std::string kEosString(Vocabulary::kEosToken);
const std::string kUnkString(Vocabulary::kUnkToken);

bool in_input(const GeneratorInput& input, const std::string& tok) {
  return std::find(input.tokens.begin(), input.tokens.end(), tok) != input.tokens.end();
}

void check_span(std::span<const std::string> literal, const std::optional<Span>& span) {
  if (span && (span->start > span->end || span->end > literal.size())) {
    throw std::invalid_argument("span [" + std::to_string(span->start) + ", " +
                                std::to_string(span->end) + ") exceeds sentence length " +
                                std::to_string(literal.size()));
  }
}

}  // namespace

GeneratorInput build_guided_input(std::span<const std::string> idiom,
                                  std::span<const std::string> literal, std::optional<Span> span) {
  check_span(literal, span);
  GeneratorInput in;
  in.tokens.assign(idiom.begin(), idiom.end());
  in.indicators.assign(idiom.size(), 1);
  in.tokens.push_back(kSepString);
  in.indicators.push_back(0);
  for (std::size_t i = 0; i < literal.size(); ++i) {
    in.tokens.push_back(literal[i]);
    in.indicators.push_back(span && span->contains(i) ? 0 : 1);
  }
  return in;
}

GeneratorInput build_unguided_input(std::span<const std::string> idiom,
                                    std::span<const std::string> literal, std::optional<Span> span) {
  check_span(literal, span);
  GeneratorInput in;
  in.guided = false;
  in.tokens.assign(idiom.begin(), idiom.end());
  in.tokens.push_back(kSepString);
  for (std::size_t i = 0; i < literal.size(); ++i) {
    if (!(span && span->contains(i))) in.tokens.push_back(literal[i]);
  }
  in.indicators.assign(in.tokens.size(), 0);
  return in;
}

GeneratorModel::GeneratorModel(Vocabulary vocab, GeneratorDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  if (dims_.hidden < 2 || dims_.hidden % 2 != 0) {
    throw std::invalid_argument("generator: hidden size must be even and >= 2");
  }
  Rng rng(seed);
  const std::size_t H = dims_.hidden;
  word_embedding_ = params_.add_uniform("gen.word_embedding", {vocab_.size(), dims_.embed}, rng);
  copy_embedding_ = params_.add_uniform("gen.copy_embedding", {2, dims_.indicator}, rng);
  label_embedding_ = params_.add_uniform("gen.label_embedding", {2, dims_.label}, rng);
  encoder_ = BiGru::create(params_, "gen.encoder", dims_.embed + dims_.indicator, H / 2, rng);
  const std::size_t He = encoder_.state_size();
  w_init_ = params_.add_uniform("gen.W_init", {H, He}, rng);
  b_init_ = params_.add("gen.b_init", {H});
  w_att_ = params_.add_uniform("gen.W_att", {He, H}, rng);
  u_copy_ = params_.add_uniform("gen.U", {He, H}, rng);
  w_gen_ = params_.add_uniform("gen.W", {vocab_.size(), H}, rng);
  decoder_ = GruCell::create(params_, "gen.decoder", dims_.embed + dims_.label + 2 * He, H, rng);
}

InputVocab GeneratorModel::input_vocab(const GeneratorInput& input) const {
  InputVocab iv;
  for (const auto& t : input.tokens) {
    const auto id = vocab_.find(t);
    iv.word_ids.push_back(id.value_or(Vocabulary::kUnk));
    if (id) {
      iv.extended_ids.push_back(*id);
      continue;
    }
    auto it = std::find(iv.oov_tokens.begin(), iv.oov_tokens.end(), t);
    if (it == iv.oov_tokens.end()) {
      iv.oov_tokens.push_back(t);
      it = iv.oov_tokens.end() - 1;
    }
    iv.extended_ids.push_back(vocab_.size() + static_cast<std::size_t>(it - iv.oov_tokens.begin()));
  }
  return iv;
}

const std::string& GeneratorModel::extended_token(const InputVocab& iv, std::size_t id) const {
  return id < vocab_.size() ? vocab_.token(id) : iv.oov_tokens.at(id - vocab_.size());
}

Memory GeneratorModel::make_memory(Graph& g, Var states) const {
  Memory mem;
  mem.states = states;
  mem.length = g.value(states).rows();
  if (mem.length == 0) throw std::invalid_argument("generator: empty memory");
  mem.att_keys = g.matmul(states, w_att_);
  mem.copy_keys = g.tanh(g.matmul(states, u_copy_));
  return mem;
}

Memory GeneratorModel::encode(Graph& g, const GeneratorInput& input) const {
  if (input.tokens.empty()) throw std::invalid_argument("generator: empty input");
  if (input.indicators.size() != input.tokens.size()) {
    throw std::invalid_argument("generator: indicator count does not match token count");
  }
  std::vector<Var> xs;
  xs.reserve(input.tokens.size());
  for (std::size_t k = 0; k < input.tokens.size(); ++k) {
    const std::array<Var, 2> parts{g.embedding(word_embedding_, vocab_.id(input.tokens[k])),
                                   g.embedding(copy_embedding_, input.indicators[k] ? 1 : 0)};
    xs.push_back(g.concat(parts));
  }
  Var last_fwd, last_bwd;
  const auto states = encoder_.encode(g, xs, &last_fwd, &last_bwd);
  Memory mem = make_memory(g, g.stack(states));
  const std::array<Var, 2> ends{last_fwd, last_bwd};
  mem.h0 = g.tanh(g.affine(w_init_, b_init_, g.concat(ends)));
  return mem;
}

Tensor GeneratorModel::encode_input(const GeneratorInput& input) const {
  Graph g(params_);
  return g.value(encode(g, input).states);
}

Var GeneratorModel::attentive_read(Graph& g, const Memory& mem, Var h) const {
  if (mem.length == 0) throw std::invalid_argument("attentive_read: empty memory");
  return g.weighted_rows(mem.states, g.softmax(g.matvec(mem.att_keys, h)));
}

Var GeneratorModel::selective_read(Graph& g, const Memory& mem,
                                   std::span<const std::string> input_tokens,
                                   const std::string& y_prev, std::optional<Var> psi_copy_prev) const {
  std::vector<char> mask(input_tokens.size(), 0);
  bool any = false;
  for (std::size_t k = 0; k < input_tokens.size(); ++k) {
    if (input_tokens[k] == y_prev) mask[k] = any = true;
  }
  if (!any || !psi_copy_prev) {
    return g.constant(Tensor::vector(std::vector<double>(g.value(mem.states).cols(), 0.0)));
  }
  return g.weighted_rows(mem.states, g.masked_softmax(*psi_copy_prev, std::move(mask)));
}

Var GeneratorModel::copy_scores(Graph& g, const Memory& mem, Var h) const {
  return g.matvec(mem.copy_keys, h);
}

Var GeneratorModel::gen_scores(Graph& g, Var h) const { return g.linear(w_gen_, h); }

DecodeState GeneratorModel::initial_state(const Memory& mem) const {
  return DecodeState{mem.h0, kSepString, 0, std::nullopt};
}

DecodeState GeneratorModel::advance(Graph& g, const Memory& mem, const GeneratorInput& input,
                                    const DecodeState& state, Var* psi_gen_out) const {
  const Var s = attentive_read(g, mem, state.h);
  const Var xi = selective_read(g, mem, input.tokens, state.y_prev, state.psi_copy_prev);
  const std::size_t label = input.guided ? state.label_prev : 0;
  const std::array<Var, 4> parts{g.embedding(word_embedding_, vocab_.id(state.y_prev)),
                                 g.embedding(label_embedding_, label), s, xi};
  DecodeState next = state;
  next.h = decoder_.step(g, state.h, g.concat(parts));
  next.psi_copy_prev = copy_scores(g, mem, next.h);
  if (psi_gen_out) *psi_gen_out = gen_scores(g, next.h);
  return next;
}

StepDistribution step_distribution(std::span<const double> psi_copy, std::span<const double> psi_gen,
                                   const InputVocab& iv, std::size_t vocab_size) {
  if (psi_copy.size() != iv.extended_ids.size() || psi_gen.size() != vocab_size) {
    throw std::invalid_argument("step_distribution: score sizes do not match input/vocabulary");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double x : psi_copy) m = std::max(m, x);
  for (double x : psi_gen) m = std::max(m, x);
  double copy_mass = 0.0, gen_mass = 0.0;
  for (double x : psi_copy) copy_mass += std::exp(x - m);
  for (double x : psi_gen) gen_mass += std::exp(x - m);
  const double z = copy_mass + gen_mass;
  StepDistribution d;
  d.probs.assign(vocab_size + iv.oov_tokens.size(), 0.0);
  for (std::size_t k = 0; k < vocab_size; ++k) d.probs[k] = std::exp(psi_gen[k] - m) / z;
  for (std::size_t j = 0; j < psi_copy.size(); ++j) {
    d.probs[iv.extended_ids[j]] += std::exp(psi_copy[j] - m) / z;
  }
  d.p_copy = copy_mass / z;
  d.p_gen = gen_mass / z;
  return d;
}

std::uint8_t infer_label(const StepDistribution& dist) { return dist.p_copy > dist.p_gen ? 1 : 0; }

std::size_t argmax_token(const StepDistribution& dist) {
  return static_cast<std::size_t>(std::max_element(dist.probs.begin(), dist.probs.end()) -
                                  dist.probs.begin());
}

DecodeState decode_step(const GeneratorModel& model, Graph& g, const Memory& mem,
                        const GeneratorInput& input, const InputVocab& iv, const DecodeState& state,
                        StepDistribution* dist_out) {
  Var psi_gen;
  DecodeState next = model.advance(g, mem, input, state, &psi_gen);
  if (dist_out) {
    *dist_out = step_distribution(g.value(*next.psi_copy_prev).values(), g.value(psi_gen).values(),
                                  iv, model.vocab().size());
  }
  return next;
}

TeacherForcedResult teacher_forced(const GeneratorModel& model, const GeneratorInput& input,
                                   std::span<const std::string> reference, ParamStore* grad_sink,
                                   double grad_scale) {
  Graph g(model.params(), grad_sink);
  const Memory mem = model.encode(g, input);
  const InputVocab iv = model.input_vocab(input);
  const Vocabulary& vocab = model.vocab();
  DecodeState state = model.initial_state(mem);
  TeacherForcedResult result;
  std::vector<Var> losses;
  losses.reserve(reference.size() + 1);
  for (std::size_t t = 0; t <= reference.size(); ++t) {
    const std::string& y = t < reference.size() ? reference[t] : kEosString;
    Var psi_gen;
    state = model.advance(g, mem, input, state, &psi_gen);
    std::vector<std::size_t> copy_positions;
    for (std::size_t j = 0; j < input.tokens.size(); ++j) {
      if (input.tokens[j] == y) copy_positions.push_back(j);
    }
    std::optional<std::size_t> gen_index = vocab.find(y);
    // Tokens unreachable through both paths are scored as <unk>.
    const bool reachable = gen_index || !copy_positions.empty();
    if (!reachable) gen_index = Vocabulary::kUnk;
    losses.push_back(g.copy_gen_nll(*state.psi_copy_prev, psi_gen, std::move(copy_positions), gen_index));

    const StepDistribution dist = step_distribution(g.value(*state.psi_copy_prev).values(),
                                                    g.value(psi_gen).values(), iv, vocab.size());
    const std::string& predicted = model.extended_token(iv, argmax_token(dist));
    result.correct += predicted == (reachable ? y : kUnkString);
    ++result.total;

    state.y_prev = y;
    state.label_prev = in_input(input, y) ? 1 : 0;
  }
  const Var total = g.sum(losses);
  result.loss = g.scalar(total);
  if (grad_sink) g.backward(grad_scale == 1.0 ? total : g.scale(total, grad_scale));
  return result;
}

Tokens greedy_decode(const GeneratorModel& model, const GeneratorInput& input, std::size_t max_len) {
  Graph g(model.params());
  const Memory mem = model.encode(g, input);
  const InputVocab iv = model.input_vocab(input);
  DecodeState state = model.initial_state(mem);
  Tokens out;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepDistribution dist;
    state = decode_step(model, g, mem, input, iv, state, &dist);
    const std::string& tok = model.extended_token(iv, argmax_token(dist));
    if (tok == kEosString) break;
    out.push_back(tok);
    state.y_prev = tok;
    state.label_prev = infer_label(dist);
  }
  return out;
}

Tokens beam_decode(const GeneratorModel& model, const GeneratorInput& input, std::size_t beam,
                   std::size_t max_len) {
  if (beam == 0) throw std::invalid_argument("beam_decode: beam must be >= 1");
  struct Hyp {
    Tokens out;
    double logp = 0.0;
    DecodeState state;
  };
  struct Finished {
    Tokens out;
    double norm;
  };
  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double logp;
    double norm;
    std::uint8_t label;
  };

  Graph g(model.params());
  const Memory mem = model.encode(g, input);
  const InputVocab iv = model.input_vocab(input);
  std::vector<Hyp> live{Hyp{{}, 0.0, model.initial_state(mem)}};
  std::vector<Finished> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      StepDistribution dist;
      live[h].state = decode_step(model, g, mem, input, iv, live[h].state, &dist);
      std::vector<std::size_t> ids(dist.probs.size());
      std::iota(ids.begin(), ids.end(), 0);
      const std::size_t k = std::min(beam, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                        [&](std::size_t a, std::size_t b) {
                          return dist.probs[a] != dist.probs[b] ? dist.probs[a] > dist.probs[b] : a < b;
                        });
      const std::uint8_t label = infer_label(dist);
      for (std::size_t i = 0; i < k; ++i) {
        const double lp = live[h].logp + std::log(dist.probs[ids[i]]);
        cands.push_back({h, ids[i], lp, lp / static_cast<double>(live[h].out.size() + 1), label});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.norm > b.norm; });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < std::min(beam, cands.size()); ++i) {
      const Candidate& c = cands[i];
      const Hyp& parent = live[c.parent];
      const std::string& tok = model.extended_token(iv, c.token);
      if (tok == kEosString) {
        finished.push_back({parent.out, c.norm});
        continue;
      }
      Hyp h{parent.out, c.logp, parent.state};
      h.out.push_back(tok);
      h.state.y_prev = tok;
      h.state.label_prev = c.label;
      next.push_back(std::move(h));
    }
    live = std::move(next);
    if (finished.size() >= beam) break;
  }

  const Tokens* best = nullptr;
  double best_norm = -std::numeric_limits<double>::infinity();
  for (const auto& f : finished) {
    if (!best || f.norm > best_norm) {
      best = &f.out;
      best_norm = f.norm;
    }
  }
  for (const auto& h : live) {
    const double norm = h.logp / static_cast<double>(std::max<std::size_t>(1, h.out.size()));
    if (!best || norm > best_norm) {
      best = &h.out;
      best_norm = norm;
    }
  }
  return best ? *best : Tokens{};
}

std::vector<GeneratorExample> make_generator_examples(std::span<const ParallelPair> pairs,
                                                      const Lexicon& lexicon, bool guided,
                                                      std::vector<std::string>* warnings) {
  std::vector<GeneratorExample> out;
  for (const auto& p : pairs) {
    const IdiomEntry* e = lexicon.find(p.idiom_id);
    if (!e) {
      if (warnings) warnings->push_back("skipping pair with unknown idiom '" + p.idiom_id + "'");
      continue;
    }
    out.push_back({guided ? build_guided_input(e->surface, p.literal, p.span)
                          : build_unguided_input(e->surface, p.literal, p.span),
                   p.idiomatic});
  }
  return out;
}

double teacher_forced_accuracy(const GeneratorModel& model, std::span<const GeneratorExample> examples) {
  std::size_t correct = 0, total = 0;
  for (const auto& ex : examples) {
    const auto r = teacher_forced(model, ex.input, ex.reference, nullptr);
    correct += r.correct;
    total += r.total;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

TrainingReport train_generator(GeneratorModel& model, std::span<const GeneratorExample> train,
                               const GeneratorTrainOptions& options,
                               std::span<const GeneratorExample> validation) {
  TrainingReport report;
  std::vector<const GeneratorExample*> usable;
  for (const auto& ex : train) {
    const bool all_unk = std::all_of(ex.reference.begin(), ex.reference.end(), [&](const std::string& t) {
      return !model.vocab().contains(t);
    });
    if (all_unk) {
      report.warnings.push_back("skipping reference made only of <unk>: '" +
                                detokenize(ex.reference) + "'");
      continue;
    }
    usable.push_back(&ex);
  }

  double initial = 0.0;
  for (const auto* ex : usable) initial += teacher_forced(model, ex->input, ex->reference, nullptr).loss;
  report.initial_loss = usable.empty() ? 0.0 : initial / static_cast<double>(usable.size());

  Rng rng(options.seed);
  ParamStore& store = model.params();
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      store.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const GeneratorExample& ex = *usable[order[k]];
        loss_sum += teacher_forced(model, ex.input, ex.reference, &store, inv).loss;
      }
      clip_global_norm(store, options.clip_norm);
      adam_step(store, options.lr, 0.9, 0.999, 1e-8);
    }
    report.epoch_loss.push_back(usable.empty() ? 0.0 : loss_sum / static_cast<double>(usable.size()));
    if (options.validate_each_epoch && !validation.empty()) {
      std::vector<Tokens> hyps, refs;
      for (const auto& ex : validation) {
        hyps.push_back(greedy_decode(model, ex.input, options.max_len));
        refs.push_back(ex.reference);
      }
      report.validation.push_back(bleu(hyps, refs));
    }
  }
  return report;
}

Tokens rule_based_generate(std::span<const std::string> literal, std::optional<Span> span,
                           std::span<const std::string> idiom) {
  if (!span) return Tokens(literal.begin(), literal.end());
  check_span(literal, span);
  Tokens out(literal.begin(), literal.begin() + static_cast<std::ptrdiff_t>(span->start));
  out.insert(out.end(), idiom.begin(), idiom.end());
  out.insert(out.end(), literal.begin() + static_cast<std::ptrdiff_t>(span->end), literal.end());
  return out;
}

}  // namespace idiomgen
