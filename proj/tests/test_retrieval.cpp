#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "idiomgen/retrieval.hpp"
#include "idiomgen/gradcheck.hpp"
#include "support/synthetic.hpp"

using namespace idiomgen;

namespace {

Vocabulary small_vocab() {
  return Vocabulary({"<pad>", "<unk>", "<sep>", "<eos>", "a", "b", "c", "d", "e", "f"});
}

Lexicon three_idioms() {
  return Lexicon({
      {"i0", {"a", "b"}, {{"c"}, {"d", "e"}}, std::nullopt},
      {"i1", {"b", "c"}, {{"e", "f"}}, std::nullopt},
      {"i2", {"f"}, {{"a", "a"}, {"b"}, {"c"}}, std::nullopt},
  });
}

}  // namespace

TEST(Retrieval, ZeroParametersEncodeToZero) {
  RetrievalModel m(small_vocab(), EncoderDims{5, 4}, 1);
  for (auto& p : m.params().all()) p.value.fill(0.0);
  const auto h = m.encode_candidate(Tokens{"a", "b"}, Tokens{"c"});
  ASSERT_EQ(h.size(), 8u);
  for (double v : h) EXPECT_EQ(v, 0.0);
}

TEST(Retrieval, EncodingLengthIndependentOfInput) {
  RetrievalModel m(small_vocab(), EncoderDims{5, 4}, 1);
  EXPECT_EQ(m.encode_candidate(Tokens{"a"}, Tokens{}).size(), 8u);
  EXPECT_EQ(m.encode_candidate(Tokens{"a", "b", "c", "d", "zz"}, Tokens{"e", "f"}).size(), 8u);
  EXPECT_THROW(m.encode_candidate(Tokens{}, Tokens{"a"}), std::invalid_argument);
}

TEST(Retrieval, EncodingIsSumOfEncoderStates) {
  RetrievalModel m(small_vocab(), EncoderDims{3, 2}, 7);
  const ParamStore& st = m.params();
  const Tensor& emb = st.value(m.embedding_id());
  std::vector<std::vector<double>> inputs;
  for (std::size_t id : {m.vocab().id("a"), m.vocab().id("b"), Vocabulary::kSep, m.vocab().id("c")}) {
    const auto r = emb.row(id);
    inputs.emplace_back(r.begin(), r.end());
  }
  const auto states = bigru_encode(m.encoder(), st, inputs);
  std::vector<double> want(4, 0.0);
  for (const auto& s : states)
    for (std::size_t k = 0; k < 4; ++k) want[k] += s[k];
  const auto h = m.encode_candidate(Tokens{"a", "b"}, Tokens{"c"});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(h[k], want[k], 1e-12);
}

TEST(Retrieval, ScoreArithmetic) {
  RetrievalModel m(small_vocab(), EncoderDims{2, 1}, 1);
  ASSERT_EQ(m.state_size(), 2u);
  m.params()[m.weight_id()].value.fill(0.0);
  m.params()[m.bias_id()].value[0] = -0.25;
  EXPECT_DOUBLE_EQ(m.score(std::vector<double>{3.0, 4.0}), -0.25);
  EXPECT_DOUBLE_EQ(m.score_pair(Tokens{"a"}, Tokens{"b"}), -0.25);

  // State size is even, so the 3-dim case is padded with a zero weight.
  RetrievalModel m4(small_vocab(), EncoderDims{2, 2}, 1);
  m4.params()[m4.weight_id()].value = Tensor({1, 4}, {1, 2, 3, 0});
  m4.params()[m4.bias_id()].value[0] = 0.5;
  EXPECT_DOUBLE_EQ(m4.score(std::vector<double>{1, 1, 1, 7}), 6.5);
  EXPECT_DOUBLE_EQ(m4.score(std::vector<double>{0, 0, 0, 0}), 0.5);
  EXPECT_THROW(m4.score(std::vector<double>{1, 1, 1}), std::invalid_argument);
}

TEST(Retrieval, SingleIdiomAlwaysWins) {
  const Lexicon lex({IdiomEntry{"only", {"a"}, {{"b"}}, std::nullopt}});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RetrievalModel m(small_vocab(), EncoderDims{4, 3}, seed);
    EXPECT_EQ(retrieve_top1(m, Tokens{"c", "d", "e"}, lex, KeyMode::Definition).idiom_id, "only");
  }
}

TEST(Retrieval, TiesGoToEarlierIdiom) {
  // The key is all that differs between candidates, so identical keys tie bit-exactly.
  const Lexicon lex({
      {"first", {"x"}, {{"c", "d"}}, std::nullopt},
      {"second", {"y"}, {{"c", "d"}}, std::nullopt},
  });
  RetrievalModel m(small_vocab(), EncoderDims{4, 3}, 2);
  const auto r = retrieve_top1(m, Tokens{"a", "b"}, lex, KeyMode::Definition);
  EXPECT_EQ(r.idiom_id, "first");
  const Lexicon rev({lex[1], lex[0]});
  EXPECT_EQ(retrieve_top1(m, Tokens{"a", "b"}, rev, KeyMode::Definition).idiom_id, "second");
}

TEST(Retrieval, CandidateCountAndModes) {
  const Lexicon lex = three_idioms();
  RetrievalModel m(small_vocab(), EncoderDims{4, 3}, 3);
  EXPECT_EQ(retrieve_top1(m, Tokens{"a"}, lex, KeyMode::Definition).candidates_evaluated, 6u);
  EXPECT_EQ(retrieve_top1(m, Tokens{"a"}, lex, KeyMode::Idiom).candidates_evaluated, 3u);
  EXPECT_THROW(retrieve_top1(m, Tokens{"a"}, Lexicon{}, KeyMode::Definition), std::invalid_argument);
}

TEST(Retrieval, BestSenseIsReported) {
  const Lexicon lex = three_idioms();
  RetrievalModel m(small_vocab(), EncoderDims{4, 3}, 5);
  const Tokens s{"b", "e", "a"};
  const auto r = retrieve_top1(m, s, lex, KeyMode::Definition);
  double best = -INFINITY;
  for (const auto& e : lex)
    for (const auto& sense : e.senses) best = std::max(best, m.score_pair(s, sense));
  EXPECT_EQ(r.score, best);
  EXPECT_EQ(m.score_pair(s, lex.find(r.idiom_id)->senses[r.sense_index]), best);
}

TEST(Retrieval, ScaleInvariance) {
  const Lexicon lex = three_idioms();
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    RetrievalModel m(small_vocab(), EncoderDims{4, 3}, 10 + trial);
    Tokens s;
    for (std::size_t i = 0, n = 1 + rng.below(5); i < n; ++i) s.push_back(std::string(1, 'a' + rng.below(6)));
    const auto before = retrieve_top1(m, s, lex, KeyMode::Definition);
    const double c = rng.uniform(0.1, 10);
    for (ParamId id : {m.weight_id(), m.bias_id()})
      for (double& v : m.params()[id].value.values()) v *= c;
    EXPECT_EQ(retrieve_top1(m, s, lex, KeyMode::Definition).idiom_id, before.idiom_id);
  }
}

TEST(Retrieval, PermutedLexiconSameWinner) {
  const Lexicon lex = three_idioms();
  RetrievalModel m(small_vocab(), EncoderDims{4, 3}, 8);
  const Lexicon perm({lex[2], lex[0], lex[1]});
  for (const Tokens& s : {Tokens{"a", "b"}, Tokens{"f", "e", "d"}, Tokens{"c"}})
    EXPECT_EQ(retrieve_top1(m, s, lex, KeyMode::Definition).idiom_id,
              retrieve_top1(m, s, perm, KeyMode::Definition).idiom_id);
}

TEST(Retrieval, InstanceSampling) {
  const auto c = idiomgen::testing::disjoint_retrieval_corpus(12, 1, 3);
  Rng rng(1);
  for (const auto& p : c.train) {
    const auto inst = make_retrieval_instances(p, c.lexicon, 7, KeyMode::Definition, rng);
    ASSERT_EQ(inst.size(), 8u);
    EXPECT_EQ(inst[0].label, 1.0);
    EXPECT_EQ(inst[0].idiom_id, p.idiom_id);
    std::set<std::string> neg;
    for (std::size_t k = 1; k < inst.size(); ++k) {
      EXPECT_EQ(inst[k].label, 0.0);
      EXPECT_NE(inst[k].idiom_id, p.idiom_id);
      neg.insert(inst[k].idiom_id);
    }
    EXPECT_EQ(neg.size(), 7u);
  }
  EXPECT_THROW(make_retrieval_instances(c.train[0], c.lexicon, 12, KeyMode::Definition, rng),
               std::invalid_argument);
}

TEST(Retrieval, ZeroEpochsReportsInitialLoss) {
  const auto c = idiomgen::testing::disjoint_retrieval_corpus(6, 2, 1);
  RetrievalModel m(build_vocab(c.train, c.lexicon), EncoderDims{6, 5}, 1);
  const ParamStore before = m.params();
  RetrievalTrainOptions o;
  o.epochs = 0;
  o.negatives = 5;
  const auto r = train_retrieval(m, c.train, c.lexicon, o);
  EXPECT_TRUE(m.params().same_values(before));
  EXPECT_TRUE(r.epoch_loss.empty());
  // Every negative set is the whole rest of the lexicon, so the instances are known.
  double want = 0;
  std::size_t n = 0;
  for (const auto& p : c.train)
    for (const auto& e : c.lexicon) {
      const double s = 1 / (1 + std::exp(-m.score_pair(p.literal, e.senses[0])));
      want += e.id == p.idiom_id ? -std::log(s) : -std::log(1 - s);
      ++n;
    }
  EXPECT_NEAR(r.initial_loss, want / n, 1e-12);
}

TEST(Retrieval, SameSeedSameParameters) {
  const auto c = idiomgen::testing::disjoint_retrieval_corpus(6, 2, 1);
  const Vocabulary v = build_vocab(c.train, c.lexicon);
  RetrievalTrainOptions o;
  o.epochs = 2;
  o.negatives = 3;
  RetrievalModel a(v, EncoderDims{6, 5}, 1), b(v, EncoderDims{6, 5}, 1);
  const auto ra = train_retrieval(a, c.train, c.lexicon, o, c.validation);
  const auto rb = train_retrieval(b, c.train, c.lexicon, o, c.validation);
  EXPECT_TRUE(a.params().same_values(b.params()));
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(ra.validation, rb.validation);
}

TEST(Retrieval, LossGradient) {
  RetrievalModel m(small_vocab(), EncoderDims{3, 2}, 1);
  Rng rng(2);
  for (auto& p : m.params().all())
    for (double& v : p.value.values()) v = rng.uniform(-0.5, 0.5);
  const std::vector<RetrievalInstance> inst{{{"a", "b"}, "x", {"c"}, 1.0}, {{"a", "b"}, "y", {"d", "e"}, 0.0}};
  auto fn = [&](const ParamStore&, ParamStore* sink) { return retrieval_loss(m, inst, sink); };
  EXPECT_LE(grad_check(fn, m.params(), 1e-4).max_relative_error, 1e-4);
}

TEST(Retrieval, LossFallsOnSeparableSet) {
  const auto c = idiomgen::testing::disjoint_retrieval_corpus(10, 3, 2);
  RetrievalModel m(build_vocab(c.train, c.lexicon), EncoderDims{16, 12}, 1);
  RetrievalTrainOptions o;
  o.epochs = 5;
  o.negatives = 3;
  const auto r = train_retrieval(m, c.train, c.lexicon, o);
  EXPECT_TRUE(std::isfinite(r.initial_loss));
  ASSERT_EQ(r.epoch_loss.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.epoch_loss[e], r.epoch_loss[e - 1]) << "epoch " << e + 1;
}
