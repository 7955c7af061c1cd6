#pragma once

// Hypothesis/reference pairs covering the usual metric edge cases: exact
// match, reordering, repetition, disjoint words and single tokens.

#include <utility>
#include <vector>

#include "idiomgen/corpus.hpp"

namespace idiomgen::testing {

inline std::vector<std::pair<Tokens, Tokens>> hand_pairs() {
  auto t = [](const char* s) { return tokenize(s); };
  return {
      {t("the visitors ran for cover when it started to rain ."), t("the visitors ran for cover when it started to rain .")},
      {t("the visitors run for cover when it started to rain ."), t("the visitors ran for cover when it started to rain .")},
      {t("she started mulling things over ."), t("she woke up early and started mulling things over .")},
      {t("he let the cat out of the bag"), t("he accidentally let the cat out of the bag")},
      {t("a b c d"), t("a c b d")},
      {t("completely unrelated words here"), t("the cat sat on the mat")},
      {t("the the the the"), t("the cat")},
      {t("time flies"), t("time flies like an arrow")},
      {t("we broke the ice at the party with a joke ."), t("we broke the ice with a joke at the party .")},
      {t("they kept it under wraps for months"), t("they kept the plan under wraps")},
      {t("x"), t("x")},
      {t("x"), t("y")},
      {t("it costs an arm and a leg"), t("it cost an arm and a leg")},
      {t("go the extra mile , always ."), t("always go the extra mile .")},
      {t("spill spill the beans"), t("spill the beans")},
      {t("once in a blue moon we meet"), t("we meet once in a blue moon")},
      {t("hit the sack early tonight"), t("i will hit the sack early tonight")},
      {t("the ball is in your court"), t("now the ball is in your court")},
      {t("bite the bullet and apologize"), t("you must bite the bullet")},
      {t("on cloud nine after the news"), t("she was on cloud nine")},
  };
}

}  // namespace idiomgen::testing
