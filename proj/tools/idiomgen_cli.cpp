// Command-line front end: ingest, train, transform, evaluate, gradcheck.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "idiomgen/checkpoint.hpp"
#include "idiomgen/corpus.hpp"
#include "idiomgen/extractor.hpp"
#include "idiomgen/generator.hpp"
#include "idiomgen/pipeline.hpp"
#include "idiomgen/retrieval.hpp"
#include "idiomgen/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace idiomgen;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataDir {
  Lexicon lexicon;
  Vocabulary vocab;
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> validation;
  std::vector<ParallelPair> test;
};

DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  d.lexicon = load_lexicon(dir / "lexicon.jsonl");
  d.vocab = load_vocab(dir / "vocab.json");
  d.train = load_pairs(dir / "train.jsonl", d.lexicon);
  d.validation = load_pairs(dir / "validation.jsonl", d.lexicon);
  d.test = load_pairs(dir / "test.jsonl", d.lexicon);
  return d;
}

ordered_json report_json(const std::string& component, const TrainingReport& r, const fs::path& out) {
  ordered_json j;
  j["component"] = component;
  j["initial_loss"] = r.initial_loss;
  j["epoch_loss"] = r.epoch_loss;
  j["validation"] = r.validation;
  j["warnings"] = r.warnings;
  j["checkpoint"] = out.string();
  return j;
}

struct IngestArgs {
  std::string lexicon, pairs, pairs_aug, out, annotated;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
};

int run_ingest(const IngestArgs& a) {
  const Lexicon lexicon = load_lexicon(a.lexicon);
  const auto pairs = load_pairs(a.pairs, lexicon);
  std::set<std::string> annotated;
  if (a.annotated.empty()) {
    for (const auto& e : lexicon) annotated.insert(e.id);
  } else {
    annotated = load_id_list(a.annotated);
  }
  SplitCorpus split = split_corpus(pairs, annotated, a.seed);
  if (!a.pairs_aug.empty()) {
    const auto aug = load_pairs(a.pairs_aug, lexicon);
    split.train.insert(split.train.end(), aug.begin(), aug.end());
  }
  const Vocabulary vocab = build_vocab(split.train, lexicon, a.min_count);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_lexicon(out / "lexicon.jsonl", lexicon);
  save_pairs(out / "train.jsonl", split.train);
  save_pairs(out / "validation.jsonl", split.validation);
  save_pairs(out / "test.jsonl", split.test);
  save_vocab(out / "vocab.json", vocab);

  ordered_json j;
  j["idioms"] = lexicon.size();
  j["senses"] = lexicon.total_senses();
  j["pairs"] = pairs.size();
  j["train"] = split.train.size();
  j["validation"] = split.validation.size();
  j["test"] = split.test.size();
  j["vocabulary"] = vocab.size();
  j["seed"] = a.seed;
  j["warnings"] = split.warnings;
  std::ofstream(out / "split.json") << j.dump(2) << "\n";
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out;
  std::optional<std::size_t> epochs, hidden, embed, batch, negatives;
  std::optional<double> lr;
  std::uint64_t seed = 1;
  std::string key = "definition";
  std::string context = "definition";
  std::string mode = "guided";
};

int run_train_retrieval(const TrainArgs& a) {
  const DataDir d = load_data_dir(a.data);
  RetrievalTrainOptions o;
  o.key_mode = key_mode_from_string(a.key);
  o.epochs = a.epochs.value_or(o.epochs);
  o.lr = a.lr.value_or(o.lr);
  o.seed = a.seed;
  o.batch = a.batch.value_or(o.batch);
  if (d.lexicon.size() < 2) throw DataError("retrieval training needs at least two idioms");
  if (a.negatives) {
    if (*a.negatives >= d.lexicon.size()) {
      throw UsageError("--negatives must be smaller than the lexicon size (" +
                       std::to_string(d.lexicon.size()) + ")");
    }
    o.negatives = *a.negatives;
  } else {
    o.negatives = std::min(o.negatives, d.lexicon.size() - 1);
  }
  EncoderDims dims;
  dims.hidden = a.hidden.value_or(dims.hidden);
  dims.embed = a.embed.value_or(dims.embed);
  RetrievalModel model(d.vocab, dims, a.seed);
  const TrainingReport r = train_retrieval(model, d.train, d.lexicon, o, d.validation);
  save_checkpoint(a.out, to_checkpoint(model, o.key_mode));
  std::cout << report_json("retrieval", r, a.out).dump(2) << "\n";
  return 0;
}

int run_train_extractor(const TrainArgs& a) {
  const DataDir d = load_data_dir(a.data);
  ExtractorTrainOptions o;
  o.context = extractor_context_from_string(a.context);
  o.epochs = a.epochs.value_or(o.epochs);
  o.lr = a.lr.value_or(o.lr);
  o.seed = a.seed;
  o.batch = a.batch.value_or(o.batch);
  EncoderDims dims;
  dims.hidden = a.hidden.value_or(dims.hidden);
  dims.embed = a.embed.value_or(dims.embed);
  ExtractorModel model(d.vocab, dims, a.seed);
  const TrainingReport r = train_extractor(model, d.train, d.lexicon, o, d.validation);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  save_checkpoint(a.out, to_checkpoint(model, o.context));
  std::cout << report_json("extractor", r, a.out).dump(2) << "\n";
  return 0;
}

int run_train_generator(const TrainArgs& a) {
  if (a.mode != "guided" && a.mode != "unguided") throw UsageError("--mode must be guided or unguided");
  const bool guided = a.mode == "guided";
  const DataDir d = load_data_dir(a.data);
  GeneratorTrainOptions o;
  o.epochs = a.epochs.value_or(o.epochs);
  o.lr = a.lr.value_or(o.lr);
  o.seed = a.seed;
  o.batch = a.batch.value_or(o.batch);
  GeneratorDims dims;
  dims.hidden = a.hidden.value_or(dims.hidden);
  dims.embed = a.embed.value_or(dims.embed);
  if (dims.hidden < 2 || dims.hidden % 2 != 0) throw UsageError("--hidden must be even and >= 2");
  std::vector<std::string> warnings;
  const auto train = make_generator_examples(d.train, d.lexicon, guided, &warnings);
  const auto validation = make_generator_examples(d.validation, d.lexicon, guided, &warnings);
  GeneratorModel model(d.vocab, dims, a.seed);
  TrainingReport r = train_generator(model, train, o, validation);
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  save_checkpoint(a.out, to_checkpoint(model, guided));
  std::cout << report_json(guided ? "generator" : "generator-unguided", r, a.out).dump(2) << "\n";
  return 0;
}

struct TransformArgs {
  std::string config, lexicon, ckpt_dir, input;
};

int run_transform(const TransformArgs& a) {
  const PipelineConfig config = load_config(a.config);
  const Lexicon lexicon = load_lexicon(a.lexicon);
  const PipelineModels models = load_models(a.ckpt_dir, config);
  const Tokens sentence = tokenize(a.input);
  if (sentence.empty()) throw UsageError("--input is empty after tokenization");
  std::cout << result_to_json(transform(models, lexicon, std::span<const std::string>(sentence), config))
            << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string config, data, ckpt_dir, details;
  std::string split = "test";
};

int run_evaluate(const EvaluateArgs& a) {
  const PipelineConfig config = load_config(a.config);
  const DataDir d = load_data_dir(a.data);
  const auto& pairs = a.split == "validation" ? d.validation : d.test;
  if (pairs.empty()) throw DataError("the " + a.split + " split is empty");
  const PipelineModels models = load_models(a.ckpt_dir, config);
  std::vector<TransformResult> results;
  const MetricReport report = evaluate(models, pairs, d.lexicon, config, &results);
  if (!a.details.empty()) {
    std::ofstream out(a.details);
    if (!out) throw DataError("cannot write " + a.details);
    for (const auto& r : results) out << result_to_json(r, -1) << "\n";
  }
  std::cout << report_to_json(report) << "\n";
  return 0;
}

int run_gradcheck(const std::string& module) {
  std::vector<std::string> modules;
  if (module.empty()) {
    modules = gradcheck_modules();
  } else {
    modules.push_back(module);
  }
  bool ok = true;
  ordered_json all = ordered_json::array();
  for (const auto& m : modules) {
    const GradCheckResult r = gradcheck_module(m);
    const bool pass = r.max_relative_error <= kGradCheckTolerance;
    ok = ok && pass;
    ordered_json j;
    j["module"] = m;
    j["max_relative_error"] = r.max_relative_error;
    j["worst_parameter"] = r.worst_parameter;
    j["worst_index"] = r.worst_index;
    j["entries_checked"] = r.entries_checked;
    j["tolerance"] = kGradCheckTolerance;
    j["pass"] = pass;
    all.push_back(std::move(j));
  }
  std::cout << all.dump(2) << "\n";
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Literal-to-idiomatic sentence rewriting: retrieval, span extraction and copy generation"};
  app.require_subcommand(1);
  std::function<int()> action;

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate, tokenize and split a corpus");
  ingest_cmd->add_option("--lexicon", ingest.lexicon, "Lexicon JSON-lines file")->required();
  ingest_cmd->add_option("--pairs", ingest.pairs, "Parallel pairs JSON-lines file")->required();
  ingest_cmd->add_option("--pairs-aug", ingest.pairs_aug, "Extra training-only pairs");
  ingest_cmd->add_option("--out", ingest.out, "Output data directory")->required();
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed");
  ingest_cmd->add_option("--annotated", ingest.annotated,
                         "File of annotated idiom ids, one per line (default: every idiom)");
  ingest_cmd->add_option("--min-count", ingest.min_count, "Vocabulary frequency threshold")
      ->check(CLI::PositiveNumber);
  ingest_cmd->callback([&] { action = [&] { return run_ingest(ingest); }; });

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one pipeline stage");
  train_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--data", train.data, "Directory written by ingest")->required();
    c->add_option("--out", train.out, "Checkpoint path")->required();
    c->add_option("--epochs", train.epochs, "Training epochs");
    c->add_option("--lr", train.lr, "Adam learning rate");
    c->add_option("--seed", train.seed, "Initialization and sampling seed");
    c->add_option("--hidden", train.hidden, "Hidden size")->check(CLI::PositiveNumber);
    c->add_option("--embed", train.embed, "Token embedding size")->check(CLI::PositiveNumber);
    c->add_option("--batch", train.batch, "Pairs per update")->check(CLI::PositiveNumber);
  };
  auto* tr_ret = train_cmd->add_subcommand("retrieval", "Idiom retrieval cross-encoder");
  add_common(tr_ret);
  tr_ret->add_option("--negatives", train.negatives, "Negative idioms per positive");
  tr_ret->add_option("--key", train.key, "Candidate key text")->check(CLI::IsMember({"definition", "idiom"}));
  tr_ret->callback([&] { action = [&] { return run_train_retrieval(train); }; });
  auto* tr_ext = train_cmd->add_subcommand("extractor", "BIO span extractor");
  add_common(tr_ext);
  tr_ext->add_option("--context", train.context, "Text after <sep>")
      ->check(CLI::IsMember({"definition", "idiom", "none"}));
  tr_ext->callback([&] { action = [&] { return run_train_extractor(train); }; });
  auto* tr_gen = train_cmd->add_subcommand("generator", "Copy-mechanism generator");
  add_common(tr_gen);
  tr_gen->add_option("--mode", train.mode, "guided or unguided")->check(CLI::IsMember({"guided", "unguided"}));
  tr_gen->callback([&] { action = [&] { return run_train_generator(train); }; });

  TransformArgs tf;
  auto* tf_cmd = app.add_subcommand("transform", "Rewrite one sentence");
  tf_cmd->add_option("--config", tf.config, "Pipeline config JSON")->required();
  tf_cmd->add_option("--lexicon", tf.lexicon, "Lexicon JSON-lines file")->required();
  tf_cmd->add_option("--ckpt-dir", tf.ckpt_dir, "Directory of checkpoints")->required();
  tf_cmd->add_option("--input", tf.input, "Literal sentence")->required();
  tf_cmd->callback([&] { action = [&] { return run_transform(tf); }; });

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Run the pipeline over a split and score it");
  ev_cmd->add_option("--config", ev.config, "Pipeline config JSON")->required();
  ev_cmd->add_option("--data", ev.data, "Directory written by ingest")->required();
  ev_cmd->add_option("--ckpt-dir", ev.ckpt_dir, "Directory of checkpoints")->required();
  ev_cmd->add_option("--split", ev.split, "test or validation")->check(CLI::IsMember({"test", "validation"}));
  ev_cmd->add_option("--details", ev.details, "Write one TransformResult per line here");
  ev_cmd->callback([&] { action = [&] { return run_evaluate(ev); }; });

  std::string gc_module;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks on toy models");
  gc_cmd->add_option("--module", gc_module, "Only this module")
      ->check(CLI::IsMember({"retrieval", "extractor", "generator"}));
  gc_cmd->callback([&] { action = [&] { return run_gradcheck(gc_module); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}
