#include "relagent/evaluation.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "relagent/error.hpp"

namespace relagent {

double f1_from_counts(const LabelCounts& c) {
  if (c.tp == 0) return 0.0;
  // 2PR/(P+R) reduced to one integer ratio, so the result is correctly rounded.
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

ScoreResult score(const std::vector<Prediction>& predictions,
                  const std::map<std::string, std::string>& golds, const LabelSet& labels,
                  bool exclude_no_relation) {
  ScoreResult result;
  auto& tally = result.tally.per_label;
  std::set<std::string> seen;
  for (const auto& p : predictions) {
    auto gold = golds.find(p.instance_id);
    if (gold == golds.end()) {
      throw Error(Errc::IdMismatch, fmt::format("prediction '{}' has no gold label", p.instance_id));
    }
    if (!seen.insert(p.instance_id).second) {
      throw Error(Errc::IdMismatch, fmt::format("duplicate prediction for '{}'", p.instance_id));
    }
    const auto& g = gold->second;
    const std::string predicted = p.predicted_label ? *p.predicted_label : kInvalidLabel;
    if (predicted == g) {
      ++tally[g].tp;
    } else {
      ++tally[g].fn;
      if (predicted != kInvalidLabel) ++tally[predicted].fp;
    }
  }
  if (seen.size() != golds.size()) {
    throw Error(Errc::IdMismatch,
                fmt::format("{} gold labels but {} predictions", golds.size(), seen.size()));
  }

  LabelCounts total;
  double f1_sum = 0.0;
  std::size_t scored = 0;
  for (const auto& [label, counts] : tally) {
    if (exclude_no_relation && label == labels.no_relation_label()) continue;
    if (counts.tp + counts.fp + counts.fn == 0) continue;
    const double f1 = f1_from_counts(counts);
    result.per_label_f1[label] = f1;
    f1_sum += f1;
    ++scored;
    total.tp += counts.tp;
    total.fp += counts.fp;
    total.fn += counts.fn;
  }
  result.macro_f1 = scored ? f1_sum / static_cast<double>(scored) : 0.0;
  const long denom = 2 * total.tp + total.fp + total.fn;
  result.micro_f1 = denom ? 2.0 * static_cast<double>(total.tp) / static_cast<double>(denom) : 0.0;
  return result;
}

RoutingScore score_routing(const std::map<std::string, std::string>& decisions,
                           const std::map<std::string, std::string>& gold_routes,
                           const std::vector<std::string>& specialist_ids) {
  if (decisions.size() != gold_routes.size()) {
    throw Error(Errc::IdMismatch, fmt::format("{} routing decisions but {} gold routes",
                                              decisions.size(), gold_routes.size()));
  }
  std::map<std::string, LabelCounts> counts;
  for (const auto& [id, decided] : decisions) {
    auto gold = gold_routes.find(id);
    if (gold == gold_routes.end()) {
      throw Error(Errc::IdMismatch, fmt::format("routing decision '{}' has no gold route", id));
    }
    if (decided == gold->second) {
      ++counts[decided].tp;
    } else {
      ++counts[decided].fp;
      ++counts[gold->second].fn;
    }
  }
  RoutingScore out;
  for (const auto& id : specialist_ids) {
    auto it = counts.find(id);
    if (it != counts.end()) out.per_specialist[id] = f1_from_counts(it->second);
  }
  if (auto it = counts.find(kNoRelationRoute); it != counts.end()) {
    out.no_relation = f1_from_counts(it->second);
  }
  return out;
}

std::string RunReport::models_label() const {
  std::vector<std::string> parts;
  for (const auto& [role, model] : model_ids) parts.push_back(fmt::format("{}={}", role, model));
  return fmt::format("{}", fmt::join(parts, ","));
}

void to_json(json& j, const RunReport& r) {
  j = json{{"schema_version", kReportSchemaVersion},
           {"run_id", r.run_id},
           {"architecture", to_string(r.architecture)},
           {"model_ids", r.model_ids},
           {"dataset_id", to_string(r.dataset)},
           {"macro_f1", r.macro_f1},
           {"micro_f1", r.micro_f1},
           {"per_label_f1", r.per_label_f1},
           {"error_count", r.error_count},
           {"instance_count", r.instance_count},
           {"manifest", r.manifest}};
  if (r.routing_f1) {
    json routing{{"per_specialist", r.routing_f1->per_specialist}};
    routing["no_relation"] = r.routing_f1->no_relation ? json(*r.routing_f1->no_relation) : json(nullptr);
    j["routing_f1"] = routing;
  } else {
    j["routing_f1"] = nullptr;
  }
}

void from_json(const json& j, RunReport& r) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw Error(Errc::MissingReport, "unsupported report schema version");
  }
  j.at("run_id").get_to(r.run_id);
  r.architecture = parse_architecture(j.at("architecture").get<std::string>());
  r.model_ids = j.at("model_ids").get<std::map<std::string, std::string>>();
  r.dataset = parse_dataset_id(j.at("dataset_id").get<std::string>());
  j.at("macro_f1").get_to(r.macro_f1);
  j.at("micro_f1").get_to(r.micro_f1);
  r.per_label_f1 = j.at("per_label_f1").get<std::map<std::string, double>>();
  j.at("error_count").get_to(r.error_count);
  j.at("instance_count").get_to(r.instance_count);
  r.manifest = j.value("manifest", json::object());
  r.routing_f1.reset();
  if (j.contains("routing_f1") && !j["routing_f1"].is_null()) {
    RoutingScore routing;
    routing.per_specialist = j["routing_f1"].at("per_specialist").get<std::map<std::string, double>>();
    if (!j["routing_f1"]["no_relation"].is_null()) {
      routing.no_relation = j["routing_f1"]["no_relation"].get<double>();
    }
    r.routing_f1 = routing;
  }
}

RenderedReport render_report(const std::vector<RunReport>& reports) {
  using RowKey = std::tuple<Architecture, std::string>;
  std::set<DatasetId> datasets;
  std::map<RowKey, std::map<DatasetId, std::pair<double, double>>> rows;
  for (const auto& r : reports) {
    datasets.insert(r.dataset);
    rows[{r.architecture, r.models_label()}][r.dataset] = {r.macro_f1, r.micro_f1};
  }

  std::vector<std::string> columns;
  for (auto d : datasets) {
    columns.push_back(fmt::format("{}_macro_f1", to_string(d)));
    columns.push_back(fmt::format("{}_micro_f1", to_string(d)));
  }

  RenderedReport out;
  out.table = json{{"schema_version", kReportSchemaVersion}, {"columns", columns}, {"rows", json::array()}};
  out.csv = "models,architecture";
  for (const auto& c : columns) out.csv += "," + c;
  out.csv += '\n';

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Models", "Architecture"};
  for (auto d : datasets) {
    header.push_back(fmt::format("{} F1-Mac", to_string(d)));
    header.push_back(fmt::format("{} F1-Mic", to_string(d)));
  }
  cells.push_back(header);

  for (const auto& [key, by_dataset] : rows) {
    const auto& [arch, models] = key;
    json values = json::object();
    std::vector<std::string> text_row{models, std::string(to_string(arch))};
    out.csv += fmt::format("\"{}\",{}", models, to_string(arch));
    for (auto d : datasets) {
      auto it = by_dataset.find(d);
      const auto macro_key = fmt::format("{}_macro_f1", to_string(d));
      const auto micro_key = fmt::format("{}_micro_f1", to_string(d));
      if (it == by_dataset.end()) {
        values[macro_key] = nullptr;
        values[micro_key] = nullptr;
        out.csv += ",,";
        text_row.push_back("--");
        text_row.push_back("--");
      } else {
        values[macro_key] = it->second.first;
        values[micro_key] = it->second.second;
        out.csv += fmt::format(",{},{}", it->second.first, it->second.second);
        text_row.push_back(fmt::format("{:.3f}", it->second.first));
        text_row.push_back(fmt::format("{:.3f}", it->second.second));
      }
    }
    out.csv += '\n';
    out.table["rows"].push_back(
        json{{"models", models}, {"architecture", to_string(arch)}, {"values", values}});
    cells.push_back(std::move(text_row));
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) line += "  ";
      line += c < 2 ? fmt::format("{:<{}}", cells[r][c], widths[c])
                    : fmt::format("{:>{}}", cells[r][c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out.text += line + '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      out.text += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
    }
  }
  return out;
}

}  // namespace relagent
