#include "relagent/dyn_example.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "engine_support.hpp"

namespace relagent {

namespace {

constexpr int kGenerationStage = 1;
constexpr int kSelectionStage = 2;
constexpr int kClassificationStage = 3;

const char* const kPositiveInstruction =
    "Write new, varied sentences on similar topics and with similar structure to the input. In "
    "each one, mark a head and a tail entity and label it with the relation that truly holds "
    "between them.";

const char* const kNegativeInstruction =
    "Write adversarial examples: sentences that superficially resemble the input (similar "
    "wording, similar kinds of entities) but in which the head and tail hold a different relation "
    "than they do in the input. Label each with its true, different relation.";

std::string render_pool(const std::vector<GeneratedExample>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& e = items[i];
    std::string kind;
    if (e.provenance == Provenance::retrieved) {
      kind = e.similarity ? fmt::format("training example, similarity {:.3f}", *e.similarity)
                          : std::string("training example");
    } else {
      kind = e.polarity == Polarity::positive ? "generated" : "generated contrastive";
    }
    out += fmt::format("[{}] ({}) {} | e1: {} | e2: {} | relation: {}\n", i, kind,
                       mark_surface(e.sentence, e.head, e.tail), e.head, e.tail, e.label);
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace

std::size_t ExamplePool::size() const {
  return generated_positive.size() + generated_negative.size() + retrieved.size();
}

std::vector<GeneratedExample> ExamplePool::items() const {
  std::vector<GeneratedExample> out;
  out.reserve(size());
  out.insert(out.end(), generated_positive.begin(), generated_positive.end());
  out.insert(out.end(), generated_negative.begin(), generated_negative.end());
  out.insert(out.end(), retrieved.begin(), retrieved.end());
  return out;
}

void to_json(json& j, const ExamplePool& p) {
  j = json{{"instance_id", p.instance_id},
           {"generated_positive", p.generated_positive},
           {"generated_negative", p.generated_negative},
           {"retrieved", p.retrieved}};
}

void from_json(const json& j, ExamplePool& p) {
  p.instance_id = j.at("instance_id").get<std::string>();
  p.generated_positive = j.at("generated_positive").get<std::vector<GeneratedExample>>();
  p.generated_negative = j.at("generated_negative").get<std::vector<GeneratedExample>>();
  p.retrieved = j.at("retrieved").get<std::vector<GeneratedExample>>();
}

void to_json(json& j, const SelectionResult& s) {
  j = json{{"chosen", s.chosen}, {"chosen_indices", s.chosen_indices}, {"fallback", s.fallback}};
  if (s.selector_rationale) j["selector_rationale"] = *s.selector_rationale;
}

ExampleRetriever::ExampleRetriever(const VectorIndex& index, const std::vector<RelationInstance>& train,
                                   Endpoint embedder)
    : index_(index), embedder_(std::move(embedder)) {
  for (const auto& r : train) by_id_.emplace(r.id, &r);
  for (const auto& id : index_.ids()) {
    if (!by_id_.count(id)) {
      throw Error(Errc::InvalidIndexFile, fmt::format("index entry '{}' is not a training instance", id));
    }
  }
}

std::vector<GeneratedExample> ExampleRetriever::retrieve(const RelationInstance& instance,
                                                         std::size_t k, Transcript* transcript) const {
  const auto text = retrieval_text(instance);
  EmbeddingRequest request{embedder_.model_id, {text}};
  auto response = embedder_.backend->embed(request);
  if (response.vectors.size() != 1) {
    throw Error(Errc::DimensionMismatch,
                fmt::format("expected one embedding, got {}", response.vectors.size()));
  }
  std::vector<GeneratedExample> out;
  json hits = json::array();
  if (k > 0 && index_.size() > 0) {
    for (const auto& n : index_.query(response.vectors.front(), k)) {
      const auto& src = *by_id_.at(n.instance_id);
      GeneratedExample e;
      e.sentence = src.sentence;
      e.head = src.head.text;
      e.tail = src.tail.text;
      e.label = src.gold_label.value_or("");
      e.polarity = Polarity::positive;
      e.provenance = Provenance::retrieved;
      e.source_id = src.id;
      e.similarity = n.similarity;
      out.push_back(std::move(e));
      hits.push_back({{"id", n.instance_id}, {"similarity", n.similarity}});
    }
  }
  if (transcript) {
    transcript->append({AgentRole::retriever,
                        fmt::format("{} [{}] {}", embedder_.model_id,
                                    embedding_digest(request).substr(0, 16), text),
                        hits.dump(), fmt::format("retrieved {}", out.size()), kGenerationStage});
  }
  return out;
}

ExamplePool build_pool(const RelationInstance& instance, const LabelSet& labels,
                       const EngineConfig& config, const TemplateSet& templates,
                       const Endpoint& generator, const ExampleRetriever& retriever,
                       Transcript& transcript) {
  ExamplePool pool;
  pool.instance_id = instance.id;

  auto generate = [&](Polarity polarity, int count) {
    auto bindings = instance_bindings(instance, labels);
    bindings["instruction"] = polarity == Polarity::positive ? kPositiveInstruction : kNegativeInstruction;
    bindings["count"] = std::to_string(count);
    auto request = render_prompt(templates.get(TemplateRole::example_generator), bindings,
                                 generator.model_id, config.temperature);
    auto asked = detail::ask_with_reask<ParsedExamples>(
        generator, std::move(request),
        [&](const std::string& raw) { return parse_generated_examples(raw, labels, polarity); },
        [&](const ParsedExamples& p) {
          return fmt::format("{} {} kept, {} discarded", p.examples.size(), to_string(polarity),
                             p.discarded);
        },
        transcript, AgentRole::example_generator, kGenerationStage,
        "Reply with a JSON array only, each element {\"sentence\", \"head\", \"tail\", \"label\"}.");
    if (!asked.value) {
      spdlog::warn("instance {}: no usable {} examples ({})", instance.id, to_string(polarity),
                   asked.error);
      transcript.note(fmt::format("degraded pool: {} generation failed", to_string(polarity)));
      return std::vector<GeneratedExample>{};
    }
    auto examples = std::move(asked.value->examples);
    if (examples.size() > static_cast<std::size_t>(count)) examples.resize(static_cast<std::size_t>(count));
    return examples;
  };

  pool.generated_positive = generate(Polarity::positive, config.n_generated_positive);
  pool.generated_negative = generate(Polarity::adversarial_negative, config.n_generated_negative);
  pool.retrieved = retriever.retrieve(instance, static_cast<std::size_t>(config.n_retrieved), &transcript);
  return pool;
}

std::vector<std::size_t> fallback_order(const ExamplePool& pool) {
  const auto np = pool.generated_positive.size();
  const auto nn = pool.generated_negative.size();
  std::vector<std::size_t> order;
  order.reserve(pool.size());
  for (std::size_t i = 0; i < pool.retrieved.size(); ++i) order.push_back(np + nn + i);
  for (std::size_t i = 0; i < std::max(np, nn); ++i) {
    if (i < np) order.push_back(i);
    if (i < nn) order.push_back(np + i);
  }
  return order;
}

SelectionResult select_examples(const ExamplePool& pool, const RelationInstance& instance,
                                const EngineConfig& config, const TemplateSet& templates,
                                const Endpoint& selector, Transcript& transcript) {
  const auto items = pool.items();
  if (items.empty()) throw Error(Errc::EmptyPool, fmt::format("instance {} has no candidates", instance.id));
  const auto want = std::min(static_cast<std::size_t>(config.n_selected), items.size());

  SlotBindings bindings{
      {"sentence", mark_entities(instance)}, {"head", instance.head.text}, {"tail", instance.tail.text}};
  bindings["pool"] = render_pool(items);
  bindings["count"] = std::to_string(want);
  auto request = render_prompt(templates.get(TemplateRole::example_selector), bindings,
                               selector.model_id, config.temperature);

  auto asked = detail::ask_with_reask<std::vector<std::size_t>>(
      selector, std::move(request),
      [&](const std::string& raw) {
        auto parsed = parse_index_list(raw);
        if (!parsed) throw Error(Errc::MalformedExampleBlock, "no index list in reply");
        std::vector<std::size_t> valid;
        std::set<std::size_t> seen;
        for (long i : *parsed) {
          if (i < 0 || static_cast<std::size_t>(i) >= items.size()) continue;
          if (seen.insert(static_cast<std::size_t>(i)).second) valid.push_back(static_cast<std::size_t>(i));
        }
        if (valid.empty()) throw Error(Errc::MalformedExampleBlock, "no valid pool index in reply");
        return valid;
      },
      [](const std::vector<std::size_t>& v) { return fmt::format("[{}]", fmt::join(v, ",")); },
      transcript, AgentRole::example_selector, kSelectionStage,
      fmt::format("Reply with a JSON array of {} distinct indices between 0 and {} only.", want,
                  items.size() - 1));

  SelectionResult out;
  std::vector<std::size_t> picked;
  if (asked.value) {
    picked = *asked.value;
    if (picked.size() > want) picked.resize(want);
    out.selector_rationale = transcript.turns().back().raw_response;
  }
  if (picked.size() < want) {
    out.fallback = true;
    std::set<std::size_t> have(picked.begin(), picked.end());
    for (auto i : fallback_order(pool)) {
      if (picked.size() == want) break;
      if (have.insert(i).second) picked.push_back(i);
    }
    transcript.note(asked.value ? fmt::format("selection backfilled to {} items", want)
                                : std::string("selection fell back to the deterministic order"));
  }
  out.chosen_indices = picked;
  for (auto i : picked) out.chosen.push_back(items[i]);
  return out;
}

std::string render_selected(const std::vector<GeneratedExample>& chosen) {
  if (chosen.empty()) return {};
  std::string out = "\nExamples:\n";
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& e = chosen[i];
    const bool contrastive = e.polarity == Polarity::adversarial_negative;
    out += fmt::format("Example {}{}:\nSentence: {}\nHead entity (e1): {}\nTail entity (e2): {}\nRelation: {}\n\n",
                       i + 1,
                       contrastive ? " (contrastive: resembles the input but holds a different relation)" : "",
                       mark_surface(e.sentence, e.head, e.tail), e.head, e.tail, e.label);
  }
  return out;
}

EngineResult classify_dynamic(const RelationInstance& instance, const SelectionResult& selection,
                              const LabelSet& labels, const EngineConfig& config,
                              const TemplateSet& templates, const Endpoint& classifier,
                              Transcript transcript) {
  auto bindings = instance_bindings(instance, labels);
  bindings["exemplars"] = render_selected(selection.chosen);
  auto request = render_prompt(templates.get(TemplateRole::dyn_classifier), bindings,
                               classifier.model_id, config.temperature);
  auto asked = detail::ask_with_reask<std::string>(
      classifier, std::move(request), [&](const std::string& raw) { return parse_label(raw, labels); },
      [](const std::string& l) { return l; }, transcript, AgentRole::classifier, kClassificationStage,
      detail::label_correction(labels.labels()));
  if (!asked.value) return detail::error_result(std::move(transcript), Architecture::dyn_ex, asked.error, 1);
  return detail::label_result(std::move(transcript), Architecture::dyn_ex, *asked.value,
                              Termination::single_pass, 1);
}

DynExResult run_dyn_ex(const RelationInstance& instance, const LabelSet& labels,
                       const EngineConfig& config, const TemplateSet& templates,
                       const Endpoint& generator, const ExampleRetriever& retriever,
                       const Endpoint& selector, const Endpoint& classifier) {
  config.validate();
  Transcript transcript(instance.id);
  DynExResult out;
  out.pool = build_pool(instance, labels, config, templates, generator, retriever, transcript);
  if (out.pool.size() > 0) {
    out.selection = select_examples(out.pool, instance, config, templates, selector, transcript);
  } else {
    transcript.note("empty pool: classifying without examples");
  }
  out.result = classify_dynamic(instance, out.selection, labels, config, templates, classifier,
                                std::move(transcript));
  return out;
}

}  // namespace relagent
