#include "idiomgen/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "idiomgen/checkpoint.hpp"

namespace idiomgen {

namespace {

using nlohmann::ordered_json;

StageOrder order_from_string(const std::string& s) {
  if (s == "retrieve_then_extract") return StageOrder::RetrieveThenExtract;
  if (s == "extract_then_retrieve") return StageOrder::ExtractThenRetrieve;
  throw DataError("config: unknown order '" + s + "'");
}

GeneratorMode mode_from_string(const std::string& s) {
  if (s == "guided") return GeneratorMode::Guided;
  if (s == "unguided") return GeneratorMode::Unguided;
  if (s == "rule_based") return GeneratorMode::RuleBased;
  throw DataError("config: unknown generator_mode '" + s + "'");
}

template <typename T>
const T& require(const std::optional<T>& m, const char* what) {
  if (!m) throw DataError(std::string("pipeline: no ") + what + " model loaded");
  return *m;
}

Tokens slice(std::span<const std::string> t, Span s) {
  return Tokens(t.begin() + static_cast<std::ptrdiff_t>(s.start),
                t.begin() + static_cast<std::ptrdiff_t>(s.end));
}

}  // namespace

std::string to_string(StageOrder o) {
  return o == StageOrder::RetrieveThenExtract ? "retrieve_then_extract" : "extract_then_retrieve";
}

std::string to_string(GeneratorMode m) {
  switch (m) {
    case GeneratorMode::Guided: return "guided";
    case GeneratorMode::Unguided: return "unguided";
    case GeneratorMode::RuleBased: return "rule_based";
  }
  return "guided";
}

void PipelineConfig::validate() const {
  if (beam < 1) throw std::invalid_argument("config: beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("config: max_len must be >= 1");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  try {
    const auto j = ordered_json::parse(text);
    if (!j.is_object()) throw DataError("config: expected a JSON object");
    if (j.contains("order")) c.order = order_from_string(j["order"].get<std::string>());
    if (j.contains("retrieval_key")) {
      const auto k = j["retrieval_key"].get<std::string>();
      if (k != "definition" && k != "idiom") throw DataError("config: unknown retrieval_key '" + k + "'");
      c.retrieval_key = key_mode_from_string(k);
    }
    if (j.contains("generator_mode")) c.generator_mode = mode_from_string(j["generator_mode"].get<std::string>());
    if (j.contains("beam")) c.beam = j["beam"].get<std::size_t>();
    if (j.contains("max_len")) c.max_len = j["max_len"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["order"] = to_string(c.order);
  j["retrieval_key"] = to_string(c.retrieval_key);
  j["generator_mode"] = to_string(c.generator_mode);
  j["beam"] = c.beam;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  return j.dump(2);
}

PipelineModels load_models(const std::filesystem::path& dir, const PipelineConfig& config) {
  PipelineModels m;
  m.retrieval = retrieval_from_checkpoint(load_checkpoint(dir / kRetrievalCheckpoint)).model;
  m.extractor = extractor_from_checkpoint(load_checkpoint(dir / kExtractorCheckpoint)).model;
  if (config.generator_mode == GeneratorMode::Guided) {
    m.guided = generator_from_checkpoint(load_checkpoint(dir / kGeneratorCheckpoint)).model;
  } else if (config.generator_mode == GeneratorMode::Unguided) {
    m.unguided = generator_from_checkpoint(load_checkpoint(dir / kUnguidedCheckpoint)).model;
  }
  return m;
}

TransformResult transform(const PipelineModels& models, const Lexicon& lexicon,
                          std::span<const std::string> sentence, const PipelineConfig& config) {
  config.validate();
  if (sentence.empty()) throw std::invalid_argument("transform: empty sentence");
  const RetrievalModel& retrieval = require(models.retrieval, "retrieval");
  const ExtractorModel& extractor = require(models.extractor, "extractor");

  TransformResult r;
  r.input.assign(sentence.begin(), sentence.end());
  auto record_retrieval = [&](std::span<const std::string> query) {
    const RetrievalResult top = retrieve_top1(retrieval, query, lexicon, config.retrieval_key);
    r.idiom_id = top.idiom_id;
    r.sense_index = top.sense_index;
    r.retrieval_score = top.score;
    return top.idiom_index;
  };
  auto record_span = [&](std::span<const std::string> context) {
    SpanPrediction p = extract_span(extractor, sentence, context);
    r.span = p.span;
    r.labels = std::move(p.labels);
    r.span_score = p.score;
  };

  std::size_t idiom_index = 0;
  if (config.order == StageOrder::RetrieveThenExtract) {
    idiom_index = record_retrieval(sentence);
    const IdiomEntry& e = lexicon[idiom_index];
    record_span(key_tokens(e, r.sense_index, config.retrieval_key));
  } else {
    record_span({});
    // Without a span there is nothing narrower than the sentence to match.
    const Tokens query = r.span ? slice(sentence, *r.span) : r.input;
    idiom_index = record_retrieval(query);
  }

  const Tokens& idiom = lexicon[idiom_index].surface;
  switch (config.generator_mode) {
    case GeneratorMode::RuleBased:
      r.output = rule_based_generate(sentence, r.span, idiom);
      break;
    case GeneratorMode::Guided:
      r.output = beam_decode(require(models.guided, "guided generator"),
                             build_guided_input(idiom, sentence, r.span), config.beam, config.max_len);
      break;
    case GeneratorMode::Unguided:
      r.output = beam_decode(require(models.unguided, "unguided generator"),
                             build_unguided_input(idiom, sentence, r.span), config.beam, config.max_len);
      break;
  }
  return r;
}

TransformResult transform(const PipelineModels& models, const Lexicon& lexicon,
                          const std::string& sentence, const PipelineConfig& config) {
  const Tokens tokens = tokenize(sentence);
  return transform(models, lexicon, std::span<const std::string>(tokens), config);
}

std::string result_to_json(const TransformResult& r, int indent) {
  ordered_json j;
  j["input"] = r.input;
  j["idiom_id"] = r.idiom_id;
  j["sense_index"] = r.sense_index;
  if (r.span) {
    j["span"] = {r.span->start, r.span->end};
  } else {
    j["span"] = nullptr;
  }
  std::string labels;
  for (Bio b : r.labels) labels.push_back(bio_char(b));
  j["labels"] = labels;
  j["output"] = r.output;
  j["output_text"] = detokenize(r.output);
  j["scores"] = {{"retrieval", r.retrieval_score}, {"span", r.span_score}};
  return j.dump(indent);
}

MetricReport score_outputs(std::span<const TransformResult> results, std::span<const ParallelPair> gold,
                           const Lexicon& lexicon) {
  if (results.size() != gold.size()) throw std::invalid_argument("score_outputs: misaligned lists");
  if (gold.empty()) throw std::invalid_argument("score_outputs: empty split");
  MetricReport rep;
  rep.instances = gold.size();
  std::vector<Tokens> hyps, refs, literals, idioms;
  std::vector<Span> gold_spans, kept_spans;
  std::vector<std::optional<Span>> pred_spans;
  std::vector<std::string> pred_ids, gold_ids;
  double r1 = 0, r2 = 0, rl = 0, met = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const ParallelPair& p = gold[i];
    const IdiomEntry* e = lexicon.find(p.idiom_id);
    if (!e) throw DataError("evaluate: unknown idiom id '" + p.idiom_id + "'");
    if (p.idiomatic.empty()) throw DataError("evaluate: empty reference for idiom '" + p.idiom_id + "'");
    hyps.push_back(results[i].output);
    refs.push_back(p.idiomatic);
    literals.push_back(p.literal);
    idioms.push_back(e->surface);
    gold_spans.push_back(p.span);
    pred_spans.push_back(results[i].span);
    // Non-idiom words are the ones the generator was asked to keep: those
    // outside the span the pipeline chose (the whole sentence if none).
    kept_spans.push_back(results[i].span.value_or(Span{0, 0}));
    pred_ids.push_back(results[i].idiom_id);
    gold_ids.push_back(p.idiom_id);
    r1 += rouge(hyps.back(), refs.back(), RougeVariant::One);
    r2 += rouge(hyps.back(), refs.back(), RougeVariant::Two);
    rl += rouge(hyps.back(), refs.back(), RougeVariant::L);
    met += meteor(hyps.back(), refs.back());
  }
  const double n = static_cast<double>(gold.size());
  rep.bleu = bleu(hyps, refs);
  rep.rouge1 = r1 / n;
  rep.rouge2 = r2 / n;
  rep.rougeL = rl / n;
  rep.meteor = met / n;
  rep.span_f1 = span_f1(pred_spans, gold_spans);
  rep.retrieval_accuracy = retrieval_accuracy(pred_ids, gold_ids);
  const PartAccuracy part = part_accuracy(hyps, literals, idioms, kept_spans);
  rep.idiom_part_acc = part.idiom_part;
  rep.non_idiom_part_acc = part.non_idiom_part;
  rep.by_rigidity = stratify_by_rigidity(hyps, refs, gold_ids, lexicon);
  return rep;
}

MetricReport evaluate(const PipelineModels& models, std::span<const ParallelPair> test,
                      const Lexicon& lexicon, const PipelineConfig& config,
                      std::vector<TransformResult>* results) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<TransformResult> out;
  out.reserve(test.size());
  for (const auto& p : test) out.push_back(transform(models, lexicon, std::span<const std::string>(p.literal), config));
  MetricReport rep = score_outputs(out, test, lexicon);
  if (results) *results = std::move(out);
  return rep;
}

}  // namespace idiomgen
