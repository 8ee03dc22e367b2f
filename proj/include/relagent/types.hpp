#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace relagent {

using json = nlohmann::json;

enum class DatasetId { core, refind, semeval, custom };

std::string_view to_string(DatasetId id);
DatasetId parse_dataset_id(std::string_view name);

// Byte offsets into the UTF-8 sentence, end exclusive.
struct EntitySpan {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const EntitySpan&) const = default;
};

struct RelationInstance {
  std::string id;
  std::string sentence;
  EntitySpan head;
  EntitySpan tail;
  std::optional<std::string> gold_label;
  DatasetId dataset = DatasetId::custom;

  bool operator==(const RelationInstance&) const = default;
};

/// Closed label vocabulary of one dataset.
///
/// Exactly one member is the no-relation label. Datasets that spell it
/// differently ("Other", "undefined") register those spellings as aliases so
/// that loaders and parsers normalize to the canonical member.
class LabelSet {
public:
  LabelSet() = default;
  LabelSet(DatasetId dataset, std::vector<std::string> labels, std::string no_relation_label,
           bool directed, std::map<std::string, std::string> aliases = {});

  DatasetId dataset() const { return dataset_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& no_relation_label() const { return no_relation_; }
  bool directed() const { return directed_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  bool contains(std::string_view label) const;
  std::size_t size() const { return labels_.size(); }

  /// Canonical member for `name` (identity for members, alias target for
  /// aliases), or nullopt.
  std::optional<std::string> normalize(std::string_view name) const;

  /// Same vocabulary restricted to `keep` (plus the no-relation label).
  LabelSet restricted_to(const std::vector<std::string>& keep) const;

  bool operator==(const LabelSet&) const = default;

private:
  DatasetId dataset_ = DatasetId::custom;
  std::vector<std::string> labels_;
  std::string no_relation_;
  bool directed_ = false;
  std::map<std::string, std::string> aliases_;
};

enum class Architecture { zero_shot, few_shot, gen_reflect, hier_multi, dyn_ex };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

enum class AgentRole {
  generator,
  reflector,
  orchestrator,
  specialist,
  example_generator,
  retriever,
  example_selector,
  classifier,
};

std::string_view to_string(AgentRole r);
AgentRole parse_agent_role(std::string_view name);

enum class Termination { running, approved, max_cycles, no_relation_repeat, single_pass, error };

std::string_view to_string(Termination t);
Termination parse_termination(std::string_view name);

struct TranscriptTurn {
  AgentRole role = AgentRole::classifier;
  std::string request_summary;
  std::string raw_response;
  std::string parsed_outcome;
  int cycle_index = 0;

  bool operator==(const TranscriptTurn&) const = default;
};

/// Append-only audit trail for one instance.
class Transcript {
public:
  Transcript() = default;
  explicit Transcript(std::string instance_id) : instance_id_(std::move(instance_id)) {}

  const std::string& instance_id() const { return instance_id_; }
  const std::vector<TranscriptTurn>& turns() const { return turns_; }
  Termination terminated_by() const { return terminated_by_; }
  const std::optional<std::string>& final_label() const { return final_label_; }
  const std::vector<std::string>& notes() const { return notes_; }

  /// Throws InvalidConfig if `turn.cycle_index` would decrease.
  void append(TranscriptTurn turn);
  void note(std::string text) { notes_.push_back(std::move(text)); }
  void finish(Termination how, std::optional<std::string> final_label);

  std::size_t count(AgentRole role) const;

  bool operator==(const Transcript&) const = default;

  friend void to_json(json& j, const Transcript& t);
  friend void from_json(const json& j, Transcript& t);

private:
  std::string instance_id_;
  std::vector<TranscriptTurn> turns_;
  Termination terminated_by_ = Termination::running;
  std::optional<std::string> final_label_;
  std::vector<std::string> notes_;
};

struct Prediction {
  std::string instance_id;
  std::optional<std::string> predicted_label;
  // Set instead of predicted_label when the pipeline could not produce a
  // label (unparseable output, backend failure).
  std::optional<std::string> error;
  Architecture architecture = Architecture::zero_shot;
  int attempts_used = 0;
  std::string transcript_ref;

  bool ok() const { return predicted_label.has_value(); }
  bool operator==(const Prediction&) const = default;
};

struct EngineConfig {
  int max_dialogue_cycles = 3;
  int max_classification_attempts = 3;
  int no_relation_repeat_limit = 2;
  int n_generated_positive = 10;
  int n_generated_negative = 10;
  int n_retrieved = 20;
  int n_selected = 10;
  int n_shot = 0;
  double temperature = 0.0;
  std::uint64_t exemplar_seed = 42;

  /// Throws InvalidConfig on the first violated invariant.
  void validate() const;

  bool operator==(const EngineConfig&) const = default;
};

/// Returns `instance` unchanged when every invariant holds against `labels`.
const RelationInstance& validate_instance(const RelationInstance& instance, const LabelSet& labels);

/// Pairs a prediction with the transcript that produced it.
struct EngineResult {
  Prediction prediction;
  Transcript transcript;
};

void to_json(json& j, const EntitySpan& s);
void from_json(const json& j, EntitySpan& s);
void to_json(json& j, const RelationInstance& r);
void from_json(const json& j, RelationInstance& r);
void to_json(json& j, const LabelSet& l);
void from_json(const json& j, LabelSet& l);
void to_json(json& j, const TranscriptTurn& t);
void from_json(const json& j, TranscriptTurn& t);
void to_json(json& j, const Prediction& p);
void from_json(const json& j, Prediction& p);
void to_json(json& j, const EngineConfig& c);
void from_json(const json& j, EngineConfig& c);

}  // namespace relagent
