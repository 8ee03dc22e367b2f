#include "relagent/baseline.hpp"

#include <fmt/format.h>

#include "engine_support.hpp"

namespace relagent {

std::string render_exemplars(const std::vector<RelationInstance>& exemplars) {
  if (exemplars.empty()) return {};
  std::string out = "\nLabeled examples:\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& e = exemplars[i];
    out += fmt::format("Example {}:\nSentence: {}\nHead entity (e1): {}\nTail entity (e2): {}\nRelation: {}\n\n",
                       i + 1, mark_entities(e), e.head.text, e.tail.text,
                       e.gold_label ? *e.gold_label : "?");
  }
  return out;
}

EngineResult run_baseline(const RelationInstance& instance, const LabelSet& labels,
                          const std::vector<RelationInstance>& exemplars, const EngineConfig& config,
                          const TemplateSet& templates, const Endpoint& classifier) {
  const auto arch = exemplars.empty() ? Architecture::zero_shot : Architecture::few_shot;
  Transcript transcript(instance.id);
  auto bindings = instance_bindings(instance, labels);
  bindings["exemplars"] = render_exemplars(exemplars);
  auto request = render_prompt(templates.get(TemplateRole::baseline_classifier), bindings,
                               classifier.model_id, config.temperature);
  auto asked = detail::ask_with_reask<std::string>(
      classifier, std::move(request), [&](const std::string& raw) { return parse_label(raw, labels); },
      [](const std::string& l) { return l; }, transcript, AgentRole::classifier, 1,
      detail::label_correction(labels.labels()));
  if (!asked.value) return detail::error_result(std::move(transcript), arch, asked.error, 1);
  return detail::label_result(std::move(transcript), arch, *asked.value, Termination::single_pass, 1);
}

}  // namespace relagent
