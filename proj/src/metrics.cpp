#include "idiomgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace idiomgen {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++c[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                 t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return c;
}

std::size_t clipped_overlap(const NgramCounts& h, const NgramCounts& r) {
  std::size_t m = 0;
  for (const auto& [g, c] : h) {
    auto it = r.find(g);
    if (it != r.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t total(const NgramCounts& c) {
  std::size_t n = 0;
  for (const auto& kv : c) n += kv.second;
  return n;
}

double f1(double p, double r) { return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0; }

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": misaligned lists");
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::unordered_map<std::string, std::size_t> bag(std::span<const std::string> t) {
  std::unordered_map<std::string, std::size_t> c;
  for (const auto& x : t) ++c[x];
  return c;
}

/// Share of `wanted` (as a multiset) present in `output`; 1 when nothing is wanted.
double multiset_coverage(const Tokens& output, std::span<const std::string> wanted) {
  if (wanted.empty()) return 1.0;
  auto have = bag(output);
  std::size_t hit = 0;
  for (const auto& [tok, c] : bag(wanted)) {
    auto it = have.find(tok);
    if (it != have.end()) hit += std::min(c, it->second);
  }
  return static_cast<double>(hit) / static_cast<double>(wanted.size());
}

}  // namespace

double bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  if (hypotheses.empty()) throw std::invalid_argument("bleu: empty lists");
  require_aligned(hypotheses.size(), references.size(), "bleu");
  std::array<std::size_t, 4> matched{}, candidates{};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    hyp_len += hypotheses[k].size();
    ref_len += references[k].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hypotheses[k], n);
      matched[n - 1] += clipped_overlap(h, ngrams(references[k], n));
      candidates[n - 1] += total(h);
    }
  }
  if (hyp_len == 0 || matched[0] == 0) return 0.0;
  double log_p = std::log(static_cast<double>(matched[0]) / static_cast<double>(candidates[0]));
  for (std::size_t n = 1; n < 4; ++n) {
    log_p += std::log((static_cast<double>(matched[n]) + 1.0) /
                      (static_cast<double>(candidates[n]) + 1.0));
  }
  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return std::clamp(bp * std::exp(log_p / 4.0), 0.0, 1.0);
}

double rouge(const Tokens& hypothesis, const Tokens& reference, RougeVariant variant) {
  if (reference.empty()) throw std::invalid_argument("rouge: empty reference");
  if (variant == RougeVariant::L) {
    if (hypothesis.empty()) return 0.0;
    const double l = static_cast<double>(lcs_length(hypothesis, reference));
    return f1(l / static_cast<double>(hypothesis.size()), l / static_cast<double>(reference.size()));
  }
  const std::size_t n = variant == RougeVariant::One ? 1 : 2;
  const auto h = ngrams(hypothesis, n);
  const auto r = ngrams(reference, n);
  const std::size_t th = total(h), tr = total(r);
  // Sequences too short to hold any n-gram only match themselves.
  if (th == 0 || tr == 0) return (th == 0 && tr == 0 && hypothesis == reference) ? 1.0 : 0.0;
  const double m = static_cast<double>(clipped_overlap(h, r));
  return f1(m / static_cast<double>(th), m / static_cast<double>(tr));
}

MeteorAlignment meteor_align(const Tokens& hypothesis, const Tokens& reference) {
  const std::size_t nh = hypothesis.size();
  // Per-word bookkeeping so a hypothesis position may stay unaligned only when
  // the word's maximum match count is still reachable.
  std::unordered_map<std::string, std::size_t> word_id;
  for (const auto& t : hypothesis) word_id.emplace(t, word_id.size());
  std::vector<std::size_t> hyp_word(nh);
  for (std::size_t i = 0; i < nh; ++i) hyp_word[i] = word_id.at(hypothesis[i]);
  const std::size_t nw = word_id.size();
  std::vector<std::vector<std::size_t>> ref_slots(nw);
  for (std::size_t j = 0; j < reference.size(); ++j) {
    auto it = word_id.find(reference[j]);
    if (it != word_id.end()) ref_slots[it->second].push_back(j);
  }
  std::vector<std::size_t> need(nw, 0), remaining(nw, 0);
  for (std::size_t i = 0; i < nh; ++i) ++remaining[hyp_word[i]];
  std::size_t max_matches = 0;
  for (std::size_t w = 0; w < nw; ++w) {
    need[w] = std::min(remaining[w], ref_slots[w].size());
    max_matches += need[w];
  }
  MeteorAlignment result{max_matches, max_matches};
  if (max_matches == 0) return MeteorAlignment{0, 0};

  std::vector<char> used(reference.size(), 0);
  std::vector<std::size_t> matched(nw, 0);
  std::vector<long> link(nh, -1);
  std::size_t best_chunks = max_matches + 1;
  std::size_t budget = 2'000'000;

  auto dfs = [&](auto&& self, std::size_t i, std::size_t chunks) -> void {
    if (chunks >= best_chunks || budget == 0) return;
    --budget;
    if (i == nh) {
      best_chunks = chunks;
      return;
    }
    const std::size_t w = hyp_word[i];
    --remaining[w];
    if (matched[w] < need[w]) {
      for (std::size_t j : ref_slots[w]) {
        if (used[j]) continue;
        const bool continues = i > 0 && j > 0 && link[i - 1] == static_cast<long>(j - 1);
        used[j] = 1;
        link[i] = static_cast<long>(j);
        ++matched[w];
        self(self, i + 1, chunks + (continues ? 0 : 1));
        --matched[w];
        link[i] = -1;
        used[j] = 0;
      }
    }
    if (remaining[w] >= need[w] - matched[w]) self(self, i + 1, chunks);
    ++remaining[w];
  };
  dfs(dfs, 0, 0);
  result.chunks = best_chunks;
  return result;
}

double meteor(const Tokens& hypothesis, const Tokens& reference) {
  if (reference.empty()) throw std::invalid_argument("meteor: empty reference");
  const auto a = meteor_align(hypothesis, reference);
  if (a.matches == 0) return 0.0;
  constexpr double alpha = 0.9, beta = 3.0, gamma = 0.5;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(hypothesis.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = p * r / (alpha * p + (1.0 - alpha) * r);
  const double penalty = gamma * std::pow(static_cast<double>(a.chunks) / m, beta);
  return fmean * (1.0 - penalty);
}

double span_f1_single(const std::optional<Span>& prediction, const Span& gold) {
  if (!prediction || prediction->length() == 0) return 0.0;
  const std::size_t lo = std::max(prediction->start, gold.start);
  const std::size_t hi = std::min(prediction->end, gold.end);
  const std::size_t common = hi > lo ? hi - lo : 0;
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(prediction->length());
  const double r = static_cast<double>(common) / static_cast<double>(gold.length());
  return f1(p, r);
}

double span_f1(std::span<const std::optional<Span>> predictions, std::span<const Span> golds) {
  require_aligned(predictions.size(), golds.size(), "span_f1");
  if (golds.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) s += span_f1_single(predictions[i], golds[i]);
  return s / static_cast<double>(golds.size());
}

double retrieval_accuracy(std::span<const std::string> predicted_ids,
                          std::span<const std::string> gold_ids) {
  require_aligned(predicted_ids.size(), gold_ids.size(), "retrieval_accuracy");
  if (gold_ids.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold_ids.size(); ++i) hit += predicted_ids[i] == gold_ids[i];
  return static_cast<double>(hit) / static_cast<double>(gold_ids.size());
}

PartAccuracy part_accuracy(std::span<const Tokens> outputs, std::span<const Tokens> literals,
                           std::span<const Tokens> idioms, std::span<const Span> spans) {
  require_aligned(outputs.size(), literals.size(), "part_accuracy");
  require_aligned(outputs.size(), idioms.size(), "part_accuracy");
  require_aligned(outputs.size(), spans.size(), "part_accuracy");
  PartAccuracy acc;
  if (outputs.empty()) return acc;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    acc.idiom_part += multiset_coverage(outputs[k], idioms[k]);
    Tokens rest;
    for (std::size_t i = 0; i < literals[k].size(); ++i) {
      if (!spans[k].contains(i)) rest.push_back(literals[k][i]);
    }
    acc.non_idiom_part += multiset_coverage(outputs[k], rest);
  }
  acc.idiom_part /= static_cast<double>(outputs.size());
  acc.non_idiom_part /= static_cast<double>(outputs.size());
  return acc;
}

std::map<int, double> stratify_by_rigidity(std::span<const Tokens> hypotheses,
                                           std::span<const Tokens> references,
                                           std::span<const std::string> idiom_ids,
                                           const Lexicon& lexicon) {
  require_aligned(hypotheses.size(), references.size(), "stratify_by_rigidity");
  require_aligned(hypotheses.size(), idiom_ids.size(), "stratify_by_rigidity");
  std::map<int, std::pair<std::vector<Tokens>, std::vector<Tokens>>> buckets;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const IdiomEntry* e = lexicon.find(idiom_ids[k]);
    if (!e || !e->rigidity) continue;
    auto& b = buckets[*e->rigidity];
    b.first.push_back(hypotheses[k]);
    b.second.push_back(references[k]);
  }
  std::map<int, double> out;
  for (const auto& [level, b] : buckets) out[level] = bleu(b.first, b.second);
  return out;
}

std::string report_to_json(const MetricReport& r, int indent) {
  using nlohmann::ordered_json;
  auto fill = [&](double scale) {
    ordered_json j;
    j["bleu"] = r.bleu * scale;
    j["rouge1"] = r.rouge1 * scale;
    j["rouge2"] = r.rouge2 * scale;
    j["rougeL"] = r.rougeL * scale;
    j["meteor"] = r.meteor * scale;
    j["span_f1"] = r.span_f1 * scale;
    j["retrieval_accuracy"] = r.retrieval_accuracy * scale;
    j["idiom_part_acc"] = r.idiom_part_acc * scale;
    j["non_idiom_part_acc"] = r.non_idiom_part_acc * scale;
    ordered_json by = ordered_json::object();
    for (const auto& [level, v] : r.by_rigidity) by[std::to_string(level)] = v * scale;
    j["by_rigidity"] = by;
    return j;
  };
  ordered_json j = fill(1.0);
  j["instances"] = r.instances;
  j["percent"] = fill(100.0);
  return j.dump(indent);
}

}  // namespace idiomgen
