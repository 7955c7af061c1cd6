#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idiomgen/corpus.hpp"
#include "idiomgen/extractor.hpp"
#include "idiomgen/generator.hpp"
#include "idiomgen/metrics.hpp"
#include "idiomgen/retrieval.hpp"

namespace idiomgen {

enum class StageOrder { RetrieveThenExtract, ExtractThenRetrieve };
enum class GeneratorMode { Guided, Unguided, RuleBased };

std::string to_string(StageOrder o);
std::string to_string(GeneratorMode m);

struct PipelineConfig {
  StageOrder order = StageOrder::RetrieveThenExtract;
  KeyMode retrieval_key = KeyMode::Definition;
  GeneratorMode generator_mode = GeneratorMode::Guided;
  std::size_t beam = 4;
  std::size_t max_len = 40;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument when beam or max_len is zero.
  void validate() const;
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Missing fields keep their defaults; unknown values throw DataError.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& config);

/// Trained stages. Only the ones the configured mode needs must be present.
struct PipelineModels {
  std::optional<RetrievalModel> retrieval;
  std::optional<ExtractorModel> extractor;
  std::optional<GeneratorModel> guided;
  std::optional<GeneratorModel> unguided;
};

inline constexpr const char* kRetrievalCheckpoint = "retrieval.ckpt.json";
inline constexpr const char* kExtractorCheckpoint = "extractor.ckpt.json";
inline constexpr const char* kGeneratorCheckpoint = "generator.ckpt.json";
inline constexpr const char* kUnguidedCheckpoint = "generator-unguided.ckpt.json";

/// Loads the checkpoints the config needs from a directory.
PipelineModels load_models(const std::filesystem::path& dir, const PipelineConfig& config);

struct TransformResult {
  Tokens input;
  std::string idiom_id;
  std::size_t sense_index = 0;
  double retrieval_score = 0.0;
  std::optional<Span> span;
  BioSequence labels;
  double span_score = 0.0;
  Tokens output;

  friend bool operator==(const TransformResult&, const TransformResult&) = default;
};

TransformResult transform(const PipelineModels& models, const Lexicon& lexicon,
                          std::span<const std::string> sentence, const PipelineConfig& config);
TransformResult transform(const PipelineModels& models, const Lexicon& lexicon,
                          const std::string& sentence, const PipelineConfig& config);

std::string result_to_json(const TransformResult& result, int indent = 2);

/// Full report for given outputs: references and part attribution come from
/// the gold pairs.
MetricReport score_outputs(std::span<const TransformResult> results,
                           std::span<const ParallelPair> gold, const Lexicon& lexicon);

/// Runs transform on every pair. Throws std::invalid_argument on an empty split.
MetricReport evaluate(const PipelineModels& models, std::span<const ParallelPair> test,
                      const Lexicon& lexicon, const PipelineConfig& config,
                      std::vector<TransformResult>* results = nullptr);

}  // namespace idiomgen
