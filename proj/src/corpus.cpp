#include "idiomgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "idiomgen/rng.hpp"

namespace idiomgen {

using nlohmann::json;

namespace {

bool is_punct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '"': case '\'': case '(': case ')':
      return true;
    default:
      return false;
  }
}

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

void tokenize_chunk(std::string_view s, Tokens& out) {
  auto internal_apostrophe = [&](std::size_t i) {
    return s[i] == '\'' && i > 0 && i + 1 < s.size() && is_word_char(s[i - 1]) &&
           is_word_char(s[i + 1]);
  };
  auto punct_at = [&](std::size_t i) { return is_punct(s[i]) && !internal_apostrophe(i); };
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    const bool punct = punct_at(i);
    while (j < s.size() && punct_at(j) == punct) ++j;
    std::string tok(s.substr(i, j - i));
    std::transform(tok.begin(), tok.end(), tok.begin(), lower);
    out.push_back(std::move(tok));
    i = j;
  }
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

template <typename F>
void for_each_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_line(n, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail_line(n, "expected a JSON object");
    f(j, n);
  }
}

std::string string_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) fail_line(line, std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

std::int64_t int_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) {
    fail_line(line, std::string("missing integer field '") + key + "'");
  }
  return it->get<std::int64_t>();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) tokenize_chunk(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

Lexicon::Lexicon(std::vector<IdiomEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.surface.empty()) throw DataError("idiom '" + e.id + "' has an empty surface");
    if (e.senses.empty()) throw DataError("idiom '" + e.id + "' has no definitions");
    for (const auto& s : e.senses) {
      if (s.empty()) throw DataError("idiom '" + e.id + "' has an empty definition");
    }
    if (e.rigidity && (*e.rigidity < 1 || *e.rigidity > 3)) {
      throw DataError("idiom '" + e.id + "' has rigidity outside {1,2,3}");
    }
    if (!index_.emplace(e.id, i).second) throw DataError("duplicate idiom id '" + e.id + "'");
  }
}

std::optional<std::size_t> Lexicon::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const IdiomEntry* Lexicon::find(std::string_view id) const {
  auto i = index_of(id);
  return i ? &entries_[*i] : nullptr;
}

std::size_t Lexicon::total_senses() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.senses.size();
  return n;
}

BioSequence derive_bio(std::size_t length, Span span) {
  BioSequence labels(length, Bio::O);
  for (std::size_t i = span.start; i < span.end && i < length; ++i) {
    labels[i] = (i == span.start) ? Bio::B : Bio::I;
  }
  return labels;
}

BioSequence derive_bio(const ParallelPair& pair) { return derive_bio(pair.literal.size(), pair.span); }

bool is_single_span(const BioSequence& labels) {
  std::size_t begins = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Bio::B) ++begins;
    if (labels[i] == Bio::I && (i == 0 || labels[i - 1] == Bio::O)) return false;
  }
  return begins == 1;
}

std::optional<Span> span_from_bio(const BioSequence& labels) {
  std::optional<Span> span;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Bio::O) continue;
    if (!span) span = Span{i, i + 1};
    else span->end = i + 1;
  }
  return span;
}

char bio_char(Bio b) {
  switch (b) {
    case Bio::B: return 'B';
    case Bio::I: return 'I';
    default: return 'O';
  }
}

bool is_reserved_token(std::string_view token) {
  return token == Vocabulary::kPadToken || token == Vocabulary::kUnkToken ||
         token == Vocabulary::kSepToken || token == Vocabulary::kEosToken;
}

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kPadToken), std::string(kUnkToken),
                                          std::string(kSepToken), std::string(kEosToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 4 || tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken ||
      tokens_[kSep] != kSepToken || tokens_[kEos] != kEosToken) {
    throw DataError("vocabulary must start with <pad> <unk> <sep> <eos>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

Vocabulary build_vocab(std::span<const ParallelPair> pairs, const Lexicon& lexicon,
                       std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  std::set<std::string> surface;
  auto count = [&](const Tokens& ts) {
    for (const auto& t : ts) ++counts[t];
  };
  for (const auto& p : pairs) {
    count(p.literal);
    count(p.idiomatic);
  }
  for (const auto& e : lexicon) {
    count(e.surface);
    for (const auto& s : e.senses) count(s);
    surface.insert(e.surface.begin(), e.surface.end());
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, c] : counts) {
    if (is_reserved_token(tok)) continue;
    if (c >= min_count || surface.contains(tok)) kept.emplace_back(tok, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary reserved;
  std::vector<std::string> tokens = reserved.tokens();
  for (auto& [tok, c] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

SplitCorpus split_corpus(std::span<const ParallelPair> pairs,
                         const std::set<std::string>& annotated_ids, std::uint64_t seed) {
  enum class Dest { Train, Validation, Test };
  std::vector<Dest> dest(pairs.size(), Dest::Train);
  std::map<std::string, std::vector<std::size_t>> by_idiom;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_idiom[pairs[i].idiom_id].push_back(i);

  SplitCorpus split;
  split.seed = seed;
  Rng rng(seed);
  for (const auto& id : annotated_ids) {
    auto it = by_idiom.find(id);
    if (it == by_idiom.end()) {
      split.warnings.push_back("annotated idiom '" + id + "' has no pairs");
      continue;
    }
    auto idx = it->second;
    if (idx.size() >= 3) {
      rng.shuffle(idx);
      dest[idx[0]] = Dest::Validation;
      dest[idx[1]] = Dest::Test;
    } else if (idx.size() == 2) {
      dest[idx[rng.below(2)]] = Dest::Test;
    }
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    switch (dest[i]) {
      case Dest::Train: split.train.push_back(pairs[i]); break;
      case Dest::Validation: split.validation.push_back(pairs[i]); break;
      case Dest::Test: split.test.push_back(pairs[i]); break;
    }
  }
  return split;
}

Lexicon parse_lexicon(std::istream& in) {
  std::vector<IdiomEntry> entries;
  std::set<std::string> seen;
  for_each_line(in, [&](const json& j, std::size_t line) {
    IdiomEntry e;
    e.id = string_field(j, "id", line);
    if (!seen.insert(e.id).second) fail_line(line, "duplicate idiom id '" + e.id + "'");
    e.surface = tokenize(string_field(j, "text", line));
    if (e.surface.empty()) fail_line(line, "empty idiom text");
    auto defs = j.find("definitions");
    if (defs == j.end() || !defs->is_array() || defs->empty()) {
      fail_line(line, "'definitions' must be a non-empty array of strings");
    }
    for (const auto& d : *defs) {
      if (!d.is_string()) fail_line(line, "definition is not a string");
      e.senses.push_back(tokenize(d.get<std::string>()));
      if (e.senses.back().empty()) fail_line(line, "empty definition");
    }
    if (auto r = j.find("rigidity"); r != j.end() && !r->is_null()) {
      if (!r->is_number_integer()) fail_line(line, "rigidity must be 1, 2, 3 or null");
      const auto level = r->get<std::int64_t>();
      if (level < 1 || level > 3) fail_line(line, "rigidity must be 1, 2, 3 or null");
      e.rigidity = static_cast<int>(level);
    }
    entries.push_back(std::move(e));
  });
  return Lexicon(std::move(entries));
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return parse_lexicon(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<ParallelPair> parse_pairs(std::istream& in, const Lexicon& lexicon) {
  std::vector<ParallelPair> pairs;
  for_each_line(in, [&](const json& j, std::size_t line) {
    ParallelPair p;
    p.idiom_id = string_field(j, "idiom_id", line);
    const IdiomEntry* entry = lexicon.find(p.idiom_id);
    if (!entry) fail_line(line, "unknown idiom id '" + p.idiom_id + "'");
    const auto sense = int_field(j, "sense_index", line);
    if (sense < 0 || static_cast<std::size_t>(sense) >= entry->senses.size()) {
      fail_line(line, "sense_index " + std::to_string(sense) + " out of range for '" +
                          p.idiom_id + "'");
    }
    p.sense_index = static_cast<std::size_t>(sense);
    p.literal = tokenize(string_field(j, "literal", line));
    p.idiomatic = tokenize(string_field(j, "idiomatic", line));
    auto span = j.find("span");
    if (span == j.end() || !span->is_array() || span->size() != 2 ||
        !(*span)[0].is_number_integer() || !(*span)[1].is_number_integer()) {
      fail_line(line, "'span' must be [start, end]");
    }
    const auto start = (*span)[0].get<std::int64_t>();
    const auto end = (*span)[1].get<std::int64_t>();
    if (start < 0 || start >= end || static_cast<std::size_t>(end) > p.literal.size()) {
      fail_line(line, "span [" + std::to_string(start) + ", " + std::to_string(end) +
                          ") out of bounds for " + std::to_string(p.literal.size()) +
                          " literal tokens");
    }
    p.span = Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
    pairs.push_back(std::move(p));
  });
  return pairs;
}

std::vector<ParallelPair> load_pairs(const std::filesystem::path& path, const Lexicon& lexicon) {
  auto in = open_in(path);
  try {
    return parse_pairs(in, lexicon);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::set<std::string> load_id_list(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && is_space(line.back())) line.pop_back();
    std::size_t i = 0;
    while (i < line.size() && is_space(line[i])) ++i;
    if (i < line.size()) ids.insert(line.substr(i));
  }
  return ids;
}

void write_lexicon(std::ostream& out, const Lexicon& lexicon) {
  for (const auto& e : lexicon) {
    json j;
    j["id"] = e.id;
    j["text"] = detokenize(e.surface);
    j["definitions"] = json::array();
    for (const auto& s : e.senses) j["definitions"].push_back(detokenize(s));
    j["rigidity"] = e.rigidity ? json(*e.rigidity) : json(nullptr);
    out << j.dump() << '\n';
  }
}

void write_pairs(std::ostream& out, std::span<const ParallelPair> pairs) {
  for (const auto& p : pairs) {
    json j;
    j["idiom_id"] = p.idiom_id;
    j["sense_index"] = p.sense_index;
    j["literal"] = detokenize(p.literal);
    j["idiomatic"] = detokenize(p.idiomatic);
    j["span"] = {p.span.start, p.span.end};
    out << j.dump() << '\n';
  }
}

void save_lexicon(const std::filesystem::path& path, const Lexicon& lexicon) {
  auto out = open_out(path);
  write_lexicon(out, lexicon);
}

void save_pairs(const std::filesystem::path& path, std::span<const ParallelPair> pairs) {
  auto out = open_out(path);
  write_pairs(out, pairs);
}

void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  out << json(vocab.tokens()).dump() << '\n';
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    const json j = json::parse(in);
    return Vocabulary(j.get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed vocabulary: " + e.what());
  }
}

const Tokens* sense_of(const Lexicon& lexicon, const ParallelPair& pair) {
  const IdiomEntry* e = lexicon.find(pair.idiom_id);
  if (!e || pair.sense_index >= e->senses.size()) return nullptr;
  return &e->senses[pair.sense_index];
}

}  // namespace idiomgen
