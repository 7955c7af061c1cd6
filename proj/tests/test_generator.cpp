#include <gtest/gtest.h>

#include <cmath>

#include "idiomgen/generator.hpp"
#include "idiomgen/gradcheck.hpp"

using namespace idiomgen;

namespace {

Vocabulary toy_vocab() {
  std::vector<std::string> t{"<pad>", "<unk>", "<sep>", "<eos>"};
  for (int i = 0; i < 16; ++i) t.push_back("w" + std::to_string(i));
  return Vocabulary(t);
}

GeneratorModel toy_model(std::uint64_t seed, double scale = 0.5) {
  GeneratorModel m(toy_vocab(), GeneratorDims{5, 3, 3, 8}, seed);
  Rng rng(seed + 1000);
  for (auto& p : m.params().all())
    for (double& v : p.value.values()) v = rng.uniform(-scale, scale);
  return m;
}

const Tokens kIdiom{"run", "for", "cover"};
const Tokens kLiteral{"the", "visitors", "headed", "for", "shelter", "when", "it", "started", "to", "rain", "."};

Var const_matrix(Graph& g, std::vector<std::vector<double>> rows) {
  Tensor t = Tensor::matrix(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
  return g.constant(t);
}

}  // namespace

TEST(GeneratorInput, GuidedIndicatorsForRunForCover) {
  const auto in = build_guided_input(kIdiom, kLiteral, Span{2, 5});
  EXPECT_EQ(in.tokens.size(), 15u);
  EXPECT_EQ(in.tokens[3], "<sep>");
  EXPECT_EQ(in.indicators,
            (std::vector<std::uint8_t>{1, 1, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
  EXPECT_TRUE(in.guided);
}

TEST(GeneratorInput, UnguidedRemovesSpan) {
  const auto in = build_unguided_input(kIdiom, kLiteral, Span{2, 5});
  EXPECT_EQ(in.tokens, (Tokens{"run", "for", "cover", "<sep>", "the", "visitors", "when", "it",
                               "started", "to", "rain", "."}));
  EXPECT_EQ(in.indicators, std::vector<std::uint8_t>(in.tokens.size(), 0));
  EXPECT_FALSE(in.guided);
  const auto whole = build_unguided_input(kIdiom, kLiteral, std::nullopt);
  EXPECT_EQ(whole.tokens.size(), 3 + 1 + kLiteral.size());
}

TEST(Generator, EncodeShapesAndZeroParameters) {
  GeneratorModel m = toy_model(1);
  const auto in = build_guided_input(Tokens{"w1", "w2"}, Tokens{"w3", "zz", "w4"}, Span{1, 2});
  const Tensor mem = m.encode_input(in);
  EXPECT_EQ(mem.rows(), in.tokens.size());
  EXPECT_EQ(mem.cols(), m.encoder_state_size());
  for (auto& p : m.params().all()) p.value.fill(0.0);
  const Tensor zeros = m.encode_input(in);
  for (double v : zeros.values()) EXPECT_EQ(v, 0.0);
}

TEST(Generator, AttentiveReadSingleState) {
  GeneratorModel m = toy_model(2);
  Graph g(m.params());
  const Var states = const_matrix(g, {{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8}});
  const Memory mem = m.make_memory(g, states);
  const Var s = m.attentive_read(g, mem, g.constant(Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8})));
  EXPECT_EQ(g.value(s).storage(), g.value(states).storage());
}

TEST(Generator, AttentiveReadUniformWhenAttentionIsZero) {
  GeneratorModel m = toy_model(3);
  m.params()[m.attention_id()].value.fill(0.0);
  Graph g(m.params());
  std::vector<std::vector<double>> rows(3, std::vector<double>(8));
  Rng rng(1);
  for (auto& r : rows)
    for (double& v : r) v = rng.uniform(-1, 1);
  const Memory mem = m.make_memory(g, const_matrix(g, rows));
  const Var s = m.attentive_read(g, mem, g.constant(Tensor({8}, 0.3)));
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(g.value(s)[k], (rows[0][k] + rows[1][k] + rows[2][k]) / 3, 1e-12);
}

TEST(Generator, AttentiveReadMatchesDirectEvaluation) {
  GeneratorModel m = toy_model(4, 1.0);
  const Tensor& watt = m.params().value(m.attention_id());  // He x H
  Graph g(m.params());
  std::vector<std::vector<double>> rows(3, std::vector<double>(8));
  std::vector<double> h(8);
  Rng rng(2);
  for (auto& r : rows)
    for (double& v : r) v = rng.uniform(-1, 1);
  for (double& v : h) v = rng.uniform(-1, 1);
  const Memory mem = m.make_memory(g, const_matrix(g, rows));
  const Var s = m.attentive_read(g, mem, g.constant(Tensor::vector(h)));
  std::vector<double> e(3);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) e[k] += rows[k][i] * watt.at(i, j) * h[j];
  const double mx = *std::max_element(e.begin(), e.end());
  double z = 0;
  for (double& v : e) z += (v = std::exp(v - mx));
  for (std::size_t i = 0; i < 8; ++i) {
    double want = 0;
    for (std::size_t k = 0; k < 3; ++k) want += e[k] / z * rows[k][i];
    EXPECT_NEAR(g.value(s)[i], want, 1e-12);
  }
}

TEST(Generator, SelectiveReadCases) {
  GeneratorModel m = toy_model(5);
  Graph g(m.params());
  const std::vector<std::vector<double>> rows{{1, 0, 0, 0, 0, 0, 0, 2}, {0, 3, 0, 0, 0, 0, 0, 0}, {0, 0, 5, 0, 0, 0, 0, 4}};
  const Memory mem = m.make_memory(g, const_matrix(g, rows));
  const Tokens tokens{"a", "b", "a"};
  const Var psi = g.constant(Tensor::vector({0.7, -1.0, 0.7}));

  const Var none = m.selective_read(g, mem, tokens, "c", psi);
  for (double v : g.value(none).values()) EXPECT_EQ(v, 0.0);
  const Var first = m.selective_read(g, mem, tokens, "a", std::nullopt);
  for (double v : g.value(first).values()) EXPECT_EQ(v, 0.0);

  const Var one = m.selective_read(g, mem, tokens, "b", psi);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(g.value(one)[i], rows[1][i], 1e-15);

  const Var two = m.selective_read(g, mem, tokens, "a", psi);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(g.value(two)[i], (rows[0][i] + rows[2][i]) / 2, 1e-15);
}

TEST(Generator, StepDistributionHandOracle) {
  // Vocabulary <pad> <unk> <sep> <eos> x; input [x, y, x] with y unknown.
  const Vocabulary v({"<pad>", "<unk>", "<sep>", "<eos>", "x"});
  GeneratorModel m(v, GeneratorDims{4, 2, 2, 4}, 1);
  GeneratorInput in{{"x", "y", "x"}, {1, 1, 1}, true};
  const InputVocab iv = m.input_vocab(in);
  EXPECT_EQ(iv.extended_ids, (std::vector<std::size_t>{4, 5, 4}));
  EXPECT_EQ(iv.oov_tokens, (std::vector<std::string>{"y"}));
  const std::vector<double> copy{0.5, 1.0, -0.3}, gen{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto d = step_distribution(copy, gen, iv, 5);
  const double z = std::exp(0.5) + std::exp(1.0) + std::exp(-0.3) + std::exp(0.1) + std::exp(0.2) +
                   std::exp(0.3) + std::exp(0.4) + std::exp(0.5);
  ASSERT_EQ(d.probs.size(), 6u);
  EXPECT_NEAR(d.probs[0], std::exp(0.1) / z, 1e-12);
  EXPECT_NEAR(d.probs[1], std::exp(0.2) / z, 1e-12);
  EXPECT_NEAR(d.probs[3], std::exp(0.4) / z, 1e-12);
  EXPECT_NEAR(d.probs[4], (std::exp(0.5) + std::exp(0.5) + std::exp(-0.3)) / z, 1e-12);
  EXPECT_NEAR(d.probs[5], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(d.p_copy, (std::exp(0.5) + std::exp(1.0) + std::exp(-0.3)) / z, 1e-12);
  EXPECT_EQ(m.extended_token(iv, 5), "y");
}

TEST(Generator, AbsentTokenGetsNoCopyMass) {
  const Vocabulary v({"<pad>", "<unk>", "<sep>", "<eos>", "x", "q"});
  GeneratorModel m(v, GeneratorDims{4, 2, 2, 4}, 1);
  const InputVocab iv = m.input_vocab(GeneratorInput{{"x", "x"}, {1, 1}, true});
  const std::vector<double> gen{0, 0, 0, 0, 0, 0.25};
  const auto d = step_distribution(std::vector<double>{3.0, 2.0}, gen, iv, 6);
  const double z = std::exp(3.0) + std::exp(2.0) + 5 + std::exp(0.25);
  EXPECT_NEAR(d.probs[5], std::exp(0.25) / z, 1e-12);
}

TEST(Generator, RandomStatesAreNormalized) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    GeneratorModel m = toy_model(trial, 2.0);
    const std::size_t n = 1 + rng.below(4);
    Tokens lit;
    for (std::size_t i = 0; i < n; ++i) lit.push_back(rng.below(4) ? "w" + std::to_string(rng.below(16)) : "oov" + std::to_string(i));
    const auto in = build_guided_input(Tokens{"w" + std::to_string(rng.below(16))}, lit, Span{0, 1});
    Graph g(m.params());
    const Memory mem = m.encode(g, in);
    const InputVocab iv = m.input_vocab(in);
    DecodeState st = m.initial_state(mem);
    for (int t = 0; t < 5; ++t) {
      StepDistribution d;
      st = decode_step(m, g, mem, in, iv, st, &d);
      double s = 0;
      for (double p : d.probs) s += p;
      EXPECT_NEAR(s, 1.0, 1e-6);
      EXPECT_NEAR(d.p_copy + d.p_gen, 1.0, 1e-6);
      EXPECT_GT(d.p_copy, 0.0);
      for (std::size_t j = 0; j < in.tokens.size(); ++j) EXPECT_GT(d.probs[iv.extended_ids[j]], 0.0);
      const std::size_t pick = argmax_token(d);
      st.y_prev = m.extended_token(iv, pick);
      st.label_prev = infer_label(d);
    }
  }
}

TEST(Generator, InferLabelStrictInequality) {
  EXPECT_EQ(infer_label(StepDistribution{{}, 0.7, 0.3}), 1);
  EXPECT_EQ(infer_label(StepDistribution{{}, 0.3, 0.7}), 0);
  EXPECT_EQ(infer_label(StepDistribution{{}, 0.5, 0.5}), 0);
}

TEST(Generator, ArgmaxTieGoesToSmallerId) {
  EXPECT_EQ(argmax_token(StepDistribution{{0.1, 0.4, 0.4, 0.1}, 0, 0}), 1u);
}

TEST(Generator, FirstStepInitialization) {
  GeneratorModel m = toy_model(8);
  const auto in = build_guided_input(Tokens{"w1"}, Tokens{"w2", "w3"}, Span{0, 1});
  Graph g(m.params());
  const Memory mem = m.encode(g, in);
  const DecodeState st = m.initial_state(mem);
  EXPECT_EQ(st.y_prev, "<sep>");
  EXPECT_EQ(st.label_prev, 0);
  EXPECT_FALSE(st.psi_copy_prev.has_value());
  // h0 = tanh(W_init [last forward ++ backward at 0] + b_init)
  const Tensor states = g.value(mem.states);
  const std::size_t half = m.encoder_state_size() / 2;
  std::vector<double> fin;
  for (std::size_t k = 0; k < half; ++k) fin.push_back(states.at(states.rows() - 1, k));
  for (std::size_t k = half; k < 2 * half; ++k) fin.push_back(states.at(0, k));
  const Tensor& w = m.params().value(m.params().find("gen.W_init"));
  const Tensor& b = m.params().value(m.params().find("gen.b_init"));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double a = b[i];
    for (std::size_t j = 0; j < fin.size(); ++j) a += w.at(i, j) * fin[j];
    EXPECT_NEAR(g.value(st.h)[i], std::tanh(a), 1e-12);
  }
}

TEST(Generator, DecodeStepMatchesGruOracle) {
  GeneratorModel m = toy_model(9);
  const auto in = build_guided_input(Tokens{"w1", "w2"}, Tokens{"w3", "w1", "w4"}, Span{0, 1});
  Graph g(m.params());
  const Memory mem = m.encode(g, in);
  const InputVocab iv = m.input_vocab(in);
  DecodeState st = m.initial_state(mem);
  st = decode_step(m, g, mem, in, iv, st, nullptr);
  st.y_prev = "w1";
  st.label_prev = 1;
  const std::vector<double> h_prev = g.value(st.h).storage();

  std::vector<double> x;
  const auto row = [&](ParamId id, std::size_t r) {
    const auto v = m.params().value(id).row(r);
    x.insert(x.end(), v.begin(), v.end());
  };
  row(m.word_embedding_id(), m.vocab().id("w1"));
  row(m.label_embedding_id(), 1);
  const Var s = m.attentive_read(g, mem, st.h);
  x.insert(x.end(), g.value(s).values().begin(), g.value(s).values().end());
  const Var xi = m.selective_read(g, mem, in.tokens, "w1", st.psi_copy_prev);
  x.insert(x.end(), g.value(xi).values().begin(), g.value(xi).values().end());
  ASSERT_EQ(x.size(), m.decoder_input_size());

  const DecodeState next = decode_step(m, g, mem, in, iv, st, nullptr);
  const auto want = gru_step(m.decoder(), m.params(), h_prev, x);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(g.value(next.h)[i], want[i], 1e-12);
  EXPECT_EQ(next.y_prev, "w1");
  EXPECT_EQ(next.label_prev, 1);
}

TEST(Generator, TeacherForcedLossMatchesStepwiseNll) {
  GeneratorModel m = toy_model(10);
  const auto in = build_guided_input(Tokens{"w1", "w2"}, Tokens{"w3", "zz"}, Span{1, 2});
  const Tokens ref{"w3", "w1", "w2", "zz", "w9", "never"};
  const auto tf = teacher_forced(m, in, ref, nullptr);

  Graph g(m.params());
  const Memory mem = m.encode(g, in);
  const InputVocab iv = m.input_vocab(in);
  DecodeState st = m.initial_state(mem);
  double want = 0;
  Tokens targets = ref;
  targets.push_back("<eos>");
  for (const auto& y : targets) {
    StepDistribution d;
    st = decode_step(m, g, mem, in, iv, st, &d);
    std::size_t id = m.vocab().id(y);
    for (std::size_t j = 0; j < in.tokens.size(); ++j)
      if (in.tokens[j] == y) id = iv.extended_ids[j];
    want -= std::log(d.probs[id]);
    st.y_prev = y;
    st.label_prev = std::find(in.tokens.begin(), in.tokens.end(), y) != in.tokens.end();
  }
  EXPECT_NEAR(tf.loss, want, 1e-9);
  EXPECT_EQ(tf.total, targets.size());
}

TEST(Generator, LossGradientIncludesEveryParameter) {
  GeneratorModel m = toy_model(11);
  const auto in = build_guided_input(Tokens{"w1", "w2"}, Tokens{"w3", "zz"}, Span{1, 2});
  const Tokens ref{"w3", "w1", "zz"};
  auto fn = [&](const ParamStore&, ParamStore* sink) { return teacher_forced(m, in, ref, sink).loss; };
  // Some entries have gradients near 2e-7 on a loss near 11; their relative
  // error is truncation-bound above this eps and rounding-bound below it.
  const auto r = grad_check(fn, m.params(), 3e-5);
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_parameter << "[" << r.worst_index << "]";
  EXPECT_EQ(r.entries_checked, m.params().entry_count());
}

TEST(Generator, OovTokenIsCopyReachable) {
  GeneratorModel m = toy_model(12);
  const auto in = build_guided_input(Tokens{"w1"}, Tokens{"unseen", "w2"}, Span{1, 2});
  Graph g(m.params());
  const Memory mem = m.encode(g, in);
  const InputVocab iv = m.input_vocab(in);
  ASSERT_EQ(iv.oov_tokens.size(), 1u);
  StepDistribution d;
  decode_step(m, g, mem, in, iv, m.initial_state(mem), &d);
  EXPECT_GT(d.probs[m.vocab().size()], 0.0);
}

TEST(Generator, BeamOneIsGreedy) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorModel m = toy_model(seed, 1.5);
    const auto in = build_guided_input(Tokens{"w1", "w5"}, Tokens{"w3", "zz", "w7", "w2"}, Span{1, 3});
    EXPECT_EQ(beam_decode(m, in, 1, 12), greedy_decode(m, in, 12));
  }
}

TEST(Generator, OutputsRespectMaxLength) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GeneratorModel m = toy_model(seed, 1.5);
    const auto in = build_guided_input(Tokens{"w1"}, Tokens{"w3", "w4"}, Span{0, 1});
    for (std::size_t len : {0u, 1u, 3u, 7u}) {
      EXPECT_LE(greedy_decode(m, in, len).size(), len);
      EXPECT_LE(beam_decode(m, in, 3, len).size(), len);
    }
    for (const auto& t : beam_decode(m, in, 4, 10)) EXPECT_NE(t, "<eos>");
  }
}

TEST(Generator, ExamplesFromPairs) {
  const Lexicon lex({IdiomEntry{"rfc", kIdiom, {{"to", "hide"}}, std::nullopt}});
  const std::vector<ParallelPair> pairs{{"rfc", 0, kLiteral, kLiteral, Span{2, 5}},
                                        {"missing", 0, kLiteral, kLiteral, Span{2, 5}}};
  std::vector<std::string> warnings;
  const auto ex = make_generator_examples(pairs, lex, true, &warnings);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].input, build_guided_input(kIdiom, kLiteral, Span{2, 5}));
  EXPECT_EQ(ex[0].reference, kLiteral);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(make_generator_examples(pairs, lex, false)[0].input,
            build_unguided_input(kIdiom, kLiteral, Span{2, 5}));
}

TEST(Generator, ZeroEpochsAndDeterminism) {
  const std::vector<GeneratorExample> ex{
      {build_guided_input(Tokens{"w1"}, Tokens{"w2", "w3"}, Span{0, 1}), Tokens{"w1", "w3"}},
      {build_guided_input(Tokens{"w4", "w5"}, Tokens{"w6", "w7", "w8"}, Span{1, 2}), Tokens{"w6", "w4", "w5", "w8"}},
  };
  GeneratorTrainOptions o;
  o.epochs = 0;
  GeneratorModel m(toy_vocab(), GeneratorDims{5, 3, 3, 8}, 1);
  const ParamStore before = m.params();
  train_generator(m, ex, o);
  EXPECT_TRUE(m.params().same_values(before));

  o.epochs = 3;
  o.batch = 1;
  GeneratorModel a(toy_vocab(), GeneratorDims{5, 3, 3, 8}, 1), b(toy_vocab(), GeneratorDims{5, 3, 3, 8}, 1);
  const auto ra = train_generator(a, ex, o, ex);
  const auto rb = train_generator(b, ex, o, ex);
  EXPECT_TRUE(a.params().same_values(b.params()));
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(ra.validation, rb.validation);
}

TEST(RuleBased, RunForCover) {
  EXPECT_EQ(rule_based_generate(kLiteral, Span{2, 5}, kIdiom),
            (Tokens{"the", "visitors", "run", "for", "cover", "when", "it", "started", "to", "rain", "."}));
}

TEST(RuleBased, EdgeCases) {
  EXPECT_EQ(rule_based_generate(kLiteral, Span{2, 5}, Tokens{}),
            (Tokens{"the", "visitors", "when", "it", "started", "to", "rain", "."}));
  EXPECT_EQ(rule_based_generate(kLiteral, Span{0, kLiteral.size()}, kIdiom), kIdiom);
  EXPECT_EQ(rule_based_generate(kLiteral, std::nullopt, kIdiom), kLiteral);
}

TEST(RuleBased, IsExactSplice) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    Tokens lit, idiom;
    for (std::size_t i = 0; i < n; ++i) lit.push_back("l" + std::to_string(rng.below(5)));
    for (std::size_t i = 0, k = rng.below(4); i < k; ++i) idiom.push_back("d" + std::to_string(rng.below(5)));
    const std::size_t s = rng.below(n), e = s + 1 + rng.below(n - s);
    const Tokens out = rule_based_generate(lit, Span{s, e}, idiom);
    ASSERT_EQ(out.size(), n - (e - s) + idiom.size());
    Tokens rebuilt(out.begin(), out.begin() + s);
    rebuilt.insert(rebuilt.end(), lit.begin() + s, lit.begin() + e);
    rebuilt.insert(rebuilt.end(), out.begin() + s + idiom.size(), out.end());
    EXPECT_EQ(rebuilt, lit);
    EXPECT_EQ(Tokens(out.begin() + s, out.begin() + s + idiom.size()), idiom);
  }
}
