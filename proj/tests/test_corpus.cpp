#include <gtest/gtest.h>

#include <sstream>

#include "idiomgen/corpus.hpp"
#include "idiomgen/rng.hpp"

using namespace idiomgen;

namespace {

Lexicon small_lexicon() {
  return Lexicon({
      {"run_for_cover", {"run", "for", "cover"}, {{"to", "hurry", "to", "a", "safe", "place"}}, 2},
      {"mull_over", {"mull", "over"}, {{"to", "think", "about"}, {"to", "consider"}}, std::nullopt},
  });
}

ParallelPair pair_of(const std::string& id, std::size_t n, Span span) {
  Tokens lit;
  for (std::size_t i = 0; i < n; ++i) lit.push_back("t" + std::to_string(i));
  return {id, 0, lit, lit, span};
}

}  // namespace

TEST(Tokenize, SentenceWithPeriod) {
  EXPECT_EQ(tokenize("The visitors headed for shelter when it started to rain."),
            (Tokens{"the", "visitors", "headed", "for", "shelter", "when", "it", "started", "to",
                    "rain", "."}));
}

TEST(Tokenize, EmptyAndApostrophes) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t ").empty());
  EXPECT_EQ(tokenize("Don't stop"), (Tokens{"don't", "stop"}));
  EXPECT_EQ(tokenize("'quoted'"), (Tokens{"'", "quoted", "'"}));
  EXPECT_EQ(tokenize("Wait... (really)?"), (Tokens{"wait", "...", "(", "really", ")?"}));
}

TEST(Tokenize, Idempotent) {
  const std::string text = "It's raining, \"cats\" and dogs!";
  const Tokens once = tokenize(text);
  EXPECT_EQ(tokenize(detokenize(once)), once);
}

TEST(Lexicon, ParsesAndRejectsDuplicates) {
  std::istringstream one(R"({"id":"a","text":"Break the ice","definitions":["to start talking"]})");
  const Lexicon lex = parse_lexicon(one);
  ASSERT_EQ(lex.size(), 1u);
  EXPECT_EQ(lex[0].surface, (Tokens{"break", "the", "ice"}));
  EXPECT_EQ(lex[0].senses[0], (Tokens{"to", "start", "talking"}));

  std::istringstream dup(
      "{\"id\":\"a\",\"text\":\"x\",\"definitions\":[\"y\"]}\n"
      "{\"id\":\"a\",\"text\":\"z\",\"definitions\":[\"w\"]}\n");
  try {
    parse_lexicon(dup);
    FAIL() << "duplicate id accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Lexicon, RejectsEmptySensesAndBadJson) {
  std::istringstream no_senses(R"({"id":"a","text":"x","definitions":[]})");
  EXPECT_THROW(parse_lexicon(no_senses), DataError);
  std::istringstream bad("{not json");
  EXPECT_THROW(parse_lexicon(bad), DataError);
}

TEST(Pairs, UnknownIdiomIsError) {
  const Lexicon lex = small_lexicon();
  std::istringstream in(
      R"({"idiom_id":"nope","sense_index":0,"literal":"a b","idiomatic":"a b","span":[0,1]})");
  EXPECT_THROW(parse_pairs(in, lex), DataError);
}

TEST(Pairs, SpanCoversHeadedForShelter) {
  const Lexicon lex = small_lexicon();
  std::istringstream in(
      R"({"idiom_id":"run_for_cover","sense_index":0,"literal":"The visitors headed for shelter when it started to rain.","idiomatic":"The visitors ran for cover when it started to rain.","span":[2,5]})");
  const auto pairs = parse_pairs(in, lex);
  ASSERT_EQ(pairs.size(), 1u);
  const auto& p = pairs[0];
  EXPECT_EQ(p.span, (Span{2, 5}));
  EXPECT_EQ(Tokens(p.literal.begin() + 2, p.literal.begin() + 5),
            (Tokens{"headed", "for", "shelter"}));
  const auto bio = derive_bio(p);
  EXPECT_EQ(bio[2], Bio::B);
  EXPECT_EQ(bio[3], Bio::I);
  EXPECT_EQ(bio[4], Bio::I);
  EXPECT_EQ(bio[5], Bio::O);
}

TEST(Pairs, RejectsBadSpans) {
  const Lexicon lex = small_lexicon();
  for (const char* span : {"[3,3]", "[0,9]", "[4,2]"}) {
    std::istringstream in(std::string(R"({"idiom_id":"mull_over","sense_index":0,"literal":"a b c d","idiomatic":"x","span":)") +
                          span + "}");
    EXPECT_THROW(parse_pairs(in, lex), DataError) << span;
  }
}

TEST(Bio, DirectConstruction) {
  using enum Bio;
  EXPECT_EQ(derive_bio(11, Span{2, 5}), (BioSequence{O, O, B, I, I, O, O, O, O, O, O}));
  EXPECT_EQ(derive_bio(4, Span{0, 1}), (BioSequence{B, O, O, O}));
}

TEST(Bio, RoundTripsEverySpan) {
  for (std::size_t n = 1; n <= 8; ++n)
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t e = s + 1; e <= n; ++e) {
        const auto bio = derive_bio(n, Span{s, e});
        EXPECT_TRUE(is_single_span(bio));
        EXPECT_EQ(span_from_bio(bio), (Span{s, e}));
      }
  EXPECT_FALSE(span_from_bio(BioSequence(3, Bio::O)).has_value());
}

TEST(Vocab, ReservedOnlyForEmptyCorpus) {
  const Vocabulary v = build_vocab({}, Lexicon{});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kEos), "<eos>");
  EXPECT_EQ(v.id("anything"), Vocabulary::kUnk);
}

TEST(Vocab, MinCountThreshold) {
  const std::vector<ParallelPair> pairs{{"x", 0, {"a", "a", "b"}, {}, Span{0, 1}}};
  const Vocabulary v = build_vocab(pairs, Lexicon{}, 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "<sep>", "<eos>", "a"}));
}

TEST(Vocab, DeterministicAndKeepsIdiomTokens) {
  const Lexicon lex = small_lexicon();
  const std::vector<ParallelPair> pairs{{"mull_over", 0, {"z", "y", "z"}, {"mull", "it"}, Span{0, 1}}};
  const Vocabulary a = build_vocab(pairs, lex, 3), b = build_vocab(pairs, lex, 3);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.contains("cover"));
  EXPECT_FALSE(a.contains("y"));
}

TEST(Split, SmallCases) {
  const std::vector<ParallelPair> one{pair_of("a", 3, {0, 1})};
  auto s = split_corpus(one, {"a"}, 1);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_TRUE(s.validation.empty() && s.test.empty());

  std::vector<ParallelPair> five;
  for (int i = 0; i < 5; ++i) five.push_back(pair_of("a", 3 + i, {0, 1}));
  s = split_corpus(five, {"a"}, 1);
  EXPECT_EQ(s.train.size(), 3u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);

  s = split_corpus(five, {}, 1);
  EXPECT_EQ(s.train.size(), 5u);
}

TEST(Split, AlwaysPartitions) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ParallelPair> pairs;
    std::set<std::string> annotated;
    const std::size_t idioms = 1 + rng.below(6);
    for (std::size_t k = 0; k < idioms; ++k) {
      const std::string id = "i" + std::to_string(k);
      if (rng.below(2)) annotated.insert(id);
      const std::size_t n = 1 + rng.below(5);
      for (std::size_t j = 0; j < n; ++j) pairs.push_back(pair_of(id, 2 + j, {0, 1}));
    }
    const auto s = split_corpus(pairs, annotated, trial);
    EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), pairs.size());
    std::multiset<std::size_t> lens;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& p : *part) lens.insert(p.literal.size() * 100 + std::stoul(p.idiom_id.substr(1)));
    std::multiset<std::size_t> want;
    for (const auto& p : pairs) want.insert(p.literal.size() * 100 + std::stoul(p.idiom_id.substr(1)));
    EXPECT_EQ(lens, want);
    EXPECT_EQ(split_corpus(pairs, annotated, trial).test, s.test);
  }
}

TEST(RoundTrip, LexiconAndPairs) {
  const Lexicon lex = small_lexicon();
  std::stringstream lo;
  write_lexicon(lo, lex);
  EXPECT_EQ(parse_lexicon(lo), lex);

  const std::vector<ParallelPair> pairs{
      {"run_for_cover", 0, tokenize("they headed for shelter ."), tokenize("they ran for cover ."), {1, 4}},
      {"mull_over", 1, tokenize("she thought it through"), tokenize("she mulled it over"), {1, 4}},
  };
  std::stringstream po;
  write_pairs(po, pairs);
  EXPECT_EQ(parse_pairs(po, lex), pairs);
}

TEST(RoundTrip, VocabularyFile) {
  const Lexicon lex = small_lexicon();
  const Vocabulary v = build_vocab({}, lex);
  const auto path = std::filesystem::temp_directory_path() / "idiomgen_vocab_test.json";
  save_vocab(path, v);
  EXPECT_EQ(load_vocab(path), v);
  std::filesystem::remove(path);
}

TEST(Data, OverfitCorpusLoads) {
  const Lexicon lex = load_lexicon(TEST_DATA_DIR "/overfit_lexicon.jsonl");
  const auto pairs = load_pairs(TEST_DATA_DIR "/overfit_pairs.jsonl", lex);
  EXPECT_EQ(lex.size(), 32u);
  EXPECT_EQ(pairs.size(), 32u);
  for (const auto& p : pairs) EXPECT_NE(sense_of(lex, p), nullptr);
}
