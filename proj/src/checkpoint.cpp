#include "idiomgen/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace idiomgen {

namespace {

using nlohmann::ordered_json;

ModelCheckpoint from_store(const std::string& component, const Vocabulary& vocab,
                           const ParamStore& store) {
  ModelCheckpoint c;
  c.component = component;
  c.vocabulary = vocab.tokens();
  for (const auto& p : store.all()) {
    if (!p.value.all_finite()) throw NumericError("checkpoint: parameter '" + p.name + "' is not finite");
    c.tensors.emplace_back(p.name, p.value);
  }
  return c;
}

void require_component(const ModelCheckpoint& c, const std::string& expected) {
  if (c.component != expected) {
    throw DataError("checkpoint holds component '" + c.component + "', expected '" + expected + "'");
  }
}

const std::string& hyper(const ModelCheckpoint& c, const std::string& key) {
  auto it = c.hyperparameters.find(key);
  if (it == c.hyperparameters.end()) throw DataError("checkpoint: missing hyperparameter '" + key + "'");
  return it->second;
}

std::size_t hyper_size(const ModelCheckpoint& c, const std::string& key) {
  const std::string& s = hyper(c, key);
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("checkpoint: hyperparameter '" + key + "' is not a count: '" + s + "'");
  }
}

/// Copies every tensor into the store; names and shapes must match exactly.
void restore(ParamStore& store, const ModelCheckpoint& c) {
  if (c.tensors.size() != store.size()) {
    throw DataError("checkpoint: expected " + std::to_string(store.size()) + " tensors, found " +
                    std::to_string(c.tensors.size()));
  }
  std::set<std::string> seen;
  for (const auto& [name, t] : c.tensors) {
    if (!seen.insert(name).second) throw DataError("checkpoint: duplicate tensor '" + name + "'");
    if (!store.contains(name)) throw DataError("checkpoint: unexpected tensor '" + name + "'");
    Parameter& p = store[store.find(name)];
    if (p.value.shape() != t.shape()) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_string(t.shape()) +
                      ", model expects " + shape_string(p.value.shape()));
    }
    p.value = t;
  }
}

Vocabulary vocab_of(const ModelCheckpoint& c) {
  try {
    return Vocabulary(c.vocabulary);
  } catch (const DataError& e) {
    throw DataError(std::string("checkpoint vocabulary: ") + e.what());
  }
}

}  // namespace

std::string checkpoint_to_json(const ModelCheckpoint& c) {
  ordered_json j;
  j["format_version"] = c.format_version;
  j["component"] = c.component;
  j["hyperparameters"] = ordered_json::object();
  for (const auto& [k, v] : c.hyperparameters) j["hyperparameters"][k] = v;
  j["vocabulary"] = c.vocabulary;
  std::size_t value_count = 0;
  for (const auto& entry : c.tensors) value_count += entry.second.size();
  // Counts let a reader tell a cut-off tensor list from a complete one.
  j["tensor_count"] = c.tensors.size();
  j["value_count"] = value_count;
  ordered_json tensors = ordered_json::array();
  for (const auto& [name, t] : c.tensors) {
    ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["values"] = t.storage();
    tensors.push_back(std::move(e));
  }
  j["tensors"] = std::move(tensors);
  return j.dump();
}

ModelCheckpoint checkpoint_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::out_of_range& e) {
    // 406: a literal like 1e999 that no double can hold.
    if (e.id == 406) throw NumericError(std::string("checkpoint holds a non-finite value: ") + e.what());
    throw DataError(std::string("checkpoint is truncated or not valid JSON: ") + e.what());
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint is truncated or not valid JSON: ") + e.what());
  }
  ModelCheckpoint c;
  try {
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointVersion) {
      throw DataError("checkpoint format_version " + std::to_string(c.format_version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    c.component = j.at("component").get<std::string>();
    for (const auto& [k, v] : j.at("hyperparameters").items()) c.hyperparameters[k] = v.get<std::string>();
    c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& e : j.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      auto shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto& raw = e.at("values");
      // The JSON writer turns NaN and infinities into null.
      for (const auto& v : raw)
        if (v.is_null()) throw NumericError("checkpoint: tensor '" + name + "' is not finite");
      auto values = raw.get<std::vector<double>>();
      if (values.size() != shape_product(shape)) {
        throw DataError("checkpoint: tensor '" + name + "' has " + std::to_string(values.size()) +
                        " values for shape " + shape_string(shape));
      }
      Tensor t(std::move(shape), std::move(values));
      if (!t.all_finite()) throw NumericError("checkpoint: tensor '" + name + "' is not finite");
      c.tensors.emplace_back(name, std::move(t));
    }
    const auto want_tensors = j.at("tensor_count").get<std::size_t>();
    const auto want_values = j.at("value_count").get<std::size_t>();
    std::size_t values = 0;
    for (const auto& entry : c.tensors) values += entry.second.size();
    if (c.tensors.size() != want_tensors || values != want_values) {
      throw DataError("checkpoint count mismatch: header declares " + std::to_string(want_tensors) +
                      " tensors / " + std::to_string(want_values) + " values, found " +
                      std::to_string(c.tensors.size()) + " / " + std::to_string(values));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed field: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_json(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ModelCheckpoint to_checkpoint(const RetrievalModel& model, KeyMode key_mode) {
  ModelCheckpoint c = from_store("retrieval", model.vocab(), model.params());
  c.hyperparameters["embed"] = std::to_string(model.dims().embed);
  c.hyperparameters["hidden"] = std::to_string(model.dims().hidden);
  c.hyperparameters["key_mode"] = to_string(key_mode);
  return c;
}

ModelCheckpoint to_checkpoint(const ExtractorModel& model, ExtractorContext context) {
  ModelCheckpoint c = from_store("extractor", model.vocab(), model.params());
  c.hyperparameters["embed"] = std::to_string(model.dims().embed);
  c.hyperparameters["hidden"] = std::to_string(model.dims().hidden);
  c.hyperparameters["context"] = to_string(context);
  return c;
}

ModelCheckpoint to_checkpoint(const GeneratorModel& model, bool guided) {
  ModelCheckpoint c = from_store("generator", model.vocab(), model.params());
  c.hyperparameters["embed"] = std::to_string(model.dims().embed);
  c.hyperparameters["indicator"] = std::to_string(model.dims().indicator);
  c.hyperparameters["label"] = std::to_string(model.dims().label);
  c.hyperparameters["hidden"] = std::to_string(model.dims().hidden);
  c.hyperparameters["mode"] = guided ? "guided" : "unguided";
  return c;
}

LoadedRetrieval retrieval_from_checkpoint(const ModelCheckpoint& c) {
  require_component(c, "retrieval");
  EncoderDims dims{hyper_size(c, "embed"), hyper_size(c, "hidden")};
  KeyMode mode;
  try {
    mode = key_mode_from_string(hyper(c, "key_mode"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  LoadedRetrieval out{RetrievalModel(vocab_of(c), dims, 0), mode};
  restore(out.model.params(), c);
  return out;
}

LoadedExtractor extractor_from_checkpoint(const ModelCheckpoint& c) {
  require_component(c, "extractor");
  EncoderDims dims{hyper_size(c, "embed"), hyper_size(c, "hidden")};
  ExtractorContext ctx;
  try {
    ctx = extractor_context_from_string(hyper(c, "context"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  LoadedExtractor out{ExtractorModel(vocab_of(c), dims, 0), ctx};
  restore(out.model.params(), c);
  return out;
}

LoadedGenerator generator_from_checkpoint(const ModelCheckpoint& c) {
  require_component(c, "generator");
  GeneratorDims dims{hyper_size(c, "embed"), hyper_size(c, "indicator"), hyper_size(c, "label"),
                     hyper_size(c, "hidden")};
  const std::string& mode = hyper(c, "mode");
  if (mode != "guided" && mode != "unguided") throw DataError("checkpoint: unknown generator mode '" + mode + "'");
  try {
    LoadedGenerator out{GeneratorModel(vocab_of(c), dims, 0), mode == "guided"};
    restore(out.model.params(), c);
    return out;
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace idiomgen
