#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace idiomgen {

using Tokens = std::vector<std::string>;

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases, splits on whitespace, and detaches each maximal run of
/// . , ! ? ; : " ' ( ) as its own token. An apostrophe with a letter or
/// digit on both sides stays inside its word (don't, one's).
Tokens tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

struct IdiomEntry {
  std::string id;
  Tokens surface;
  std::vector<Tokens> senses;
  std::optional<int> rigidity;  // 1 fixed, 2 semi-fixed, 3 flexible

  friend bool operator==(const IdiomEntry&, const IdiomEntry&) = default;
};

/// Ordered idiom list with id lookup. Lexicon order is the tie-break order
/// used by retrieval.
class Lexicon {
 public:
  Lexicon() = default;
  /// Throws DataError on duplicate ids or invariant violations.
  explicit Lexicon(std::vector<IdiomEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const IdiomEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<IdiomEntry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::optional<std::size_t> index_of(std::string_view id) const;
  const IdiomEntry* find(std::string_view id) const;
  std::size_t total_senses() const;

  friend bool operator==(const Lexicon& a, const Lexicon& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<IdiomEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Half-open token interval [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct ParallelPair {
  std::string idiom_id;
  std::size_t sense_index = 0;
  Tokens literal;
  Tokens idiomatic;
  Span span;

  friend bool operator==(const ParallelPair&, const ParallelPair&) = default;
};

enum class Bio : std::uint8_t { B = 0, I = 1, O = 2 };
using BioSequence = std::vector<Bio>;

BioSequence derive_bio(std::size_t length, Span span);
BioSequence derive_bio(const ParallelPair& pair);
/// Exactly one B and every I preceded by B or I.
bool is_single_span(const BioSequence& labels);
/// Interval covered by B/I labels of a single-span sequence; nullopt if all O.
std::optional<Span> span_from_bio(const BioSequence& labels);
char bio_char(Bio b);

/// Token/id table. Ids 0..3 are <pad>, <unk>, <sep>, <eos>.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kSepToken = "<sep>";
  static constexpr std::string_view kEosToken = "<eos>";

  Vocabulary();  // reserved tokens only
  /// Full token list including the reserved prefix. Throws DataError when the
  /// prefix is wrong or a token repeats.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::optional<std::size_t> find(std::string_view token) const;
  /// Id of the token, <unk> when absent.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

bool is_reserved_token(std::string_view token);

/// Reserved tokens, then every token with frequency >= min_count plus every
/// idiom-surface token, by descending frequency with lexicographic ties.
/// Frequencies count literal and idiomatic sentences, idiom surfaces and
/// definitions.
Vocabulary build_vocab(std::span<const ParallelPair> pairs, const Lexicon& lexicon,
                       std::size_t min_count = 1);

struct SplitCorpus {
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> validation;
  std::vector<ParallelPair> test;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Per annotated idiom: >= 3 pairs puts one in validation, one in test and
/// the rest in train; exactly 2 splits them randomly between train and test;
/// 1 goes to train. Non-annotated idioms go to train. Each list keeps input
/// order.
SplitCorpus split_corpus(std::span<const ParallelPair> pairs,
                         const std::set<std::string>& annotated_ids, std::uint64_t seed);

// JSON-lines I/O. Errors name the 1-based line number.
Lexicon parse_lexicon(std::istream& in);
Lexicon load_lexicon(const std::filesystem::path& path);
std::vector<ParallelPair> parse_pairs(std::istream& in, const Lexicon& lexicon);
std::vector<ParallelPair> load_pairs(const std::filesystem::path& path, const Lexicon& lexicon);
std::set<std::string> load_id_list(const std::filesystem::path& path);

void write_lexicon(std::ostream& out, const Lexicon& lexicon);
void write_pairs(std::ostream& out, std::span<const ParallelPair> pairs);
void save_lexicon(const std::filesystem::path& path, const Lexicon& lexicon);
void save_pairs(const std::filesystem::path& path, std::span<const ParallelPair> pairs);
void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::filesystem::path& path);

/// Definition tokens for a pair's sense, or nullptr when unresolvable.
const Tokens* sense_of(const Lexicon& lexicon, const ParallelPair& pair);

}  // namespace idiomgen
