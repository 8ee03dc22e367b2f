#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/prompting.hpp"
#include "relagent/retrieval_index.hpp"
#include "relagent/types.hpp"

namespace relagent {

/// Candidate demonstrations gathered for one instance.
struct ExamplePool {
  std::string instance_id;
  std::vector<GeneratedExample> generated_positive;
  std::vector<GeneratedExample> generated_negative;
  std::vector<GeneratedExample> retrieved;  // descending similarity

  std::size_t size() const;
  /// Flat view indexed by the selector: positives, negatives, retrieved.
  std::vector<GeneratedExample> items() const;

  bool operator==(const ExamplePool&) const = default;
};

void to_json(json& j, const ExamplePool& p);
void from_json(const json& j, ExamplePool& p);

struct SelectionResult {
  std::vector<GeneratedExample> chosen;
  std::vector<std::size_t> chosen_indices;  // into ExamplePool::items()
  std::optional<std::string> selector_rationale;
  bool fallback = false;  // some or all items came from the deterministic order

  bool operator==(const SelectionResult&) const = default;
};

void to_json(json& j, const SelectionResult& s);

/// Nearest training neighbours of an instance, as labeled examples.
class ExampleRetriever {
public:
  ExampleRetriever(const VectorIndex& index, const std::vector<RelationInstance>& train,
                   Endpoint embedder);

  /// One embedding call; at most k examples, descending similarity.
  std::vector<GeneratedExample> retrieve(const RelationInstance& instance, std::size_t k,
                                         Transcript* transcript = nullptr) const;

  const VectorIndex& index() const { return index_; }

private:
  const VectorIndex& index_;
  std::unordered_map<std::string, const RelationInstance*> by_id_;
  Endpoint embedder_;
};

/// Two generation calls (positives, adversarial negatives) and one retrieval.
/// An unrecoverable generation reply leaves that side empty.
ExamplePool build_pool(const RelationInstance& instance, const LabelSet& labels,
                       const EngineConfig& config, const TemplateSet& templates,
                       const Endpoint& generator, const ExampleRetriever& retriever,
                       Transcript& transcript);

/// Deterministic selection order: retrieved by similarity, then positives and
/// negatives alternating.
std::vector<std::size_t> fallback_order(const ExamplePool& pool);

/// Throws EmptyPool. Invalid or repeated indices are dropped and the
/// shortfall backfilled from fallback_order; an unparseable reply after one
/// re-ask falls back entirely.
SelectionResult select_examples(const ExamplePool& pool, const RelationInstance& instance,
                                const EngineConfig& config, const TemplateSet& templates,
                                const Endpoint& selector, Transcript& transcript);

/// Chosen items as prompt demonstrations; negatives are marked contrastive.
std::string render_selected(const std::vector<GeneratedExample>& chosen);

EngineResult classify_dynamic(const RelationInstance& instance, const SelectionResult& selection,
                              const LabelSet& labels, const EngineConfig& config,
                              const TemplateSet& templates, const Endpoint& classifier,
                              Transcript transcript);

struct DynExResult {
  EngineResult result;
  ExamplePool pool;
  SelectionResult selection;
};

DynExResult run_dyn_ex(const RelationInstance& instance, const LabelSet& labels,
                       const EngineConfig& config, const TemplateSet& templates,
                       const Endpoint& generator, const ExampleRetriever& retriever,
                       const Endpoint& selector, const Endpoint& classifier);

}  // namespace relagent
