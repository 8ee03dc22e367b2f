#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/prompting.hpp"
#include "relagent/types.hpp"

namespace relagent {

struct SpecialistSpec {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::string> allowed_labels;

  bool operator==(const SpecialistSpec&) const = default;
};

/// The specialists of one dataset. Their label sets partition the dataset's
/// labels minus the no-relation label.
struct SpecialistTeam {
  DatasetId dataset = DatasetId::custom;
  std::vector<SpecialistSpec> specialists;

  /// Throws InvalidPartition unless every set is non-empty, the sets are
  /// pairwise disjoint, and together with no_relation they cover `labels`.
  void validate(const LabelSet& labels) const;

  const SpecialistSpec* find(std::string_view id) const;
  std::vector<std::string> ids() const;

  /// {dataset_id, specialists: [{id, name, description, labels[]}]}
  static SpecialistTeam load(const std::filesystem::path& path);
  static SpecialistTeam from_json(const json& j);
  json to_json() const;
};

/// Shipped default partition for a benchmark dataset.
SpecialistTeam builtin_specialists(DatasetId dataset);

struct RoutingDecision {
  std::string target;  // specialist id or kNoRelationRoute
  std::string rationale;

  bool bypass() const;
};

/// Reads "Agent <n>" (1-based), a specialist id or name, or a no-relation
/// answer from an orchestrator reply; nullopt when none fits.
std::optional<std::string> parse_routing(std::string_view raw, const SpecialistTeam& team,
                                         const LabelSet& labels);

/// Asks the orchestrator to route; re-asks once, then throws
/// UnroutableResponse.
RoutingDecision route(const RelationInstance& instance, const SpecialistTeam& team,
                      const LabelSet& labels, const EngineConfig& config,
                      const TemplateSet& templates, const Endpoint& orchestrator,
                      Transcript& transcript);

/// Specialist whose allowed labels contain the gold label, or NO_RELATION.
std::string routing_gold(const RelationInstance& instance, const SpecialistTeam& team,
                         const LabelSet& labels);

/// Verification and retry state for one routed instance.
struct HierState {
  enum class Verdict { accepted, rejected };
  enum class Status { running, accepted, max_attempts, no_relation_exit };

  struct Attempt {
    std::string label;
    Verdict verdict = Verdict::rejected;
  };

  std::vector<Attempt> attempts;
  int no_relation_count = 0;
  Status status = Status::running;
};

struct HierResult {
  EngineResult result;
  std::optional<RoutingDecision> routing;
};

/// Orchestrator routes; unless it bypasses, the chosen specialist answers
/// and the orchestrator verifies, retrying with feedback until acceptance,
/// config.max_classification_attempts, or the specialist's
/// config.no_relation_repeat_limit-th no-relation answer.
HierResult run_hier_multi(const RelationInstance& instance, const LabelSet& labels,
                          const SpecialistTeam& team, const EngineConfig& config,
                          const TemplateSet& templates, const Endpoint& orchestrator,
                          const Endpoint& specialist);

}  // namespace relagent
