#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relagent/types.hpp"

namespace relagent {

/// Stand-in predicted label for error records. It never earns a false
/// positive; the gold label still gets its false negative.
inline constexpr const char* kInvalidLabel = "__INVALID__";

/// Routing target meaning "bypass all specialists".
inline constexpr const char* kNoRelationRoute = "NO_RELATION";

struct LabelCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  bool operator==(const LabelCounts&) const = default;
};

struct ConfusionTally {
  std::map<std::string, LabelCounts> per_label;
};

/// 2PR/(P+R); 0 when the label has counts but tp == 0.
double f1_from_counts(const LabelCounts& c);

struct ScoreResult {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  ConfusionTally tally;
  std::map<std::string, double> per_label_f1;
};

/// Scores predictions against gold labels keyed by instance id.
///
/// Macro F1 averages per-label F1 over labels that occur in gold or
/// predictions; micro F1 is computed from tp/fp/fn summed over those labels.
/// With `exclude_no_relation` the no-relation label is dropped from both.
/// Throws IdMismatch when a prediction has no gold label or vice versa.
ScoreResult score(const std::vector<Prediction>& predictions,
                  const std::map<std::string, std::string>& golds, const LabelSet& labels,
                  bool exclude_no_relation = false);

struct RoutingScore {
  std::map<std::string, double> per_specialist;
  std::optional<double> no_relation;
};

/// One-vs-rest F1 per specialist id; the NO_RELATION route is scored as its
/// own class and reported separately.
RoutingScore score_routing(const std::map<std::string, std::string>& decisions,
                           const std::map<std::string, std::string>& gold_routes,
                           const std::vector<std::string>& specialist_ids);

struct RunReport {
  std::string run_id;
  Architecture architecture = Architecture::zero_shot;
  std::map<std::string, std::string> model_ids;  // role -> model
  DatasetId dataset = DatasetId::custom;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::map<std::string, double> per_label_f1;
  std::optional<RoutingScore> routing_f1;
  std::size_t error_count = 0;
  std::size_t instance_count = 0;
  json manifest = json::object();

  /// "gen=model-a,ref=model-b"-style label used as the table row key.
  std::string models_label() const;
};

inline constexpr int kReportSchemaVersion = 1;

void to_json(json& j, const RunReport& r);
void from_json(const json& j, RunReport& r);

struct RenderedReport {
  std::string text;
  std::string csv;
  json table;
};

/// Comparison table: one row per (models, architecture), macro and micro F1
/// columns per dataset in dataset order. Rows sort by architecture, then
/// models.
RenderedReport render_report(const std::vector<RunReport>& reports);

}  // namespace relagent
