#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "idiomgen/corpus.hpp"
#include "idiomgen/extractor.hpp"
#include "idiomgen/generator.hpp"
#include "idiomgen/params.hpp"
#include "idiomgen/retrieval.hpp"
#include "idiomgen/tensor.hpp"

namespace idiomgen {

inline constexpr int kCheckpointVersion = 1;

/// One trained component as a self-describing JSON document.
struct ModelCheckpoint {
  int format_version = kCheckpointVersion;
  std::string component;  // retrieval | extractor | generator
  std::map<std::string, std::string> hyperparameters;
  std::vector<std::string> vocabulary;
  std::vector<std::pair<std::string, Tensor>> tensors;  // parameter order

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

std::string checkpoint_to_json(const ModelCheckpoint& ckpt);
/// Throws DataError on malformed JSON, version mismatch or shape/count
/// mismatch, NumericError on non-finite values.
ModelCheckpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

ModelCheckpoint to_checkpoint(const RetrievalModel& model, KeyMode key_mode);
ModelCheckpoint to_checkpoint(const ExtractorModel& model, ExtractorContext context);
ModelCheckpoint to_checkpoint(const GeneratorModel& model, bool guided);

struct LoadedRetrieval {
  RetrievalModel model;
  KeyMode key_mode;
};
struct LoadedExtractor {
  ExtractorModel model;
  ExtractorContext context;
};
struct LoadedGenerator {
  GeneratorModel model;
  bool guided;
};

LoadedRetrieval retrieval_from_checkpoint(const ModelCheckpoint& ckpt);
LoadedExtractor extractor_from_checkpoint(const ModelCheckpoint& ckpt);
LoadedGenerator generator_from_checkpoint(const ModelCheckpoint& ckpt);

}  // namespace idiomgen
