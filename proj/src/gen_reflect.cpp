#include "relagent/gen_reflect.hpp"

#include <fmt/format.h>

#include "engine_support.hpp"

namespace relagent {

std::string render_critique_history(const GenReflectState& state) {
  if (state.critiques.empty()) return {};
  std::string out = "\nReviewer feedback on your earlier answers:\n";
  for (std::size_t i = 0; i < state.critiques.size(); ++i) {
    const auto proposal = i < state.proposals.size() ? state.proposals[i] : std::string("?");
    out += fmt::format("Round {} (you answered {}): {}\n", i + 1, proposal, state.critiques[i].text);
  }
  out += "Revise the relation column if the feedback is convincing.\n";
  return out;
}

EngineResult run_gen_reflect(const RelationInstance& instance, const LabelSet& labels,
                             const EngineConfig& config, const TemplateSet& templates,
                             const Endpoint& generator, const Endpoint& reflector) {
  config.validate();
  Transcript transcript(instance.id);
  GenReflectState state;
  const auto base = instance_bindings(instance, labels);
  const auto correction = detail::label_correction(labels.labels());

  while (true) {
    auto gen_bindings = base;
    gen_bindings["table"] = render_relation_table(instance, std::nullopt);
    gen_bindings["critique"] = render_critique_history(state);
    auto request = render_prompt(templates.get(TemplateRole::generator), gen_bindings,
                                 generator.model_id, config.temperature);
    auto asked = detail::ask_with_reask<std::string>(
        generator, std::move(request), [&](const std::string& raw) { return parse_label(raw, labels); },
        [](const std::string& l) { return l; }, transcript, AgentRole::generator, state.cycle,
        correction);
    if (!asked.value) {
      return detail::error_result(std::move(transcript), Architecture::gen_reflect, asked.error,
                                  state.cycle);
    }
    state.current_label = *asked.value;
    state.proposals.push_back(*asked.value);

    if (state.cycle >= config.max_dialogue_cycles) {
      state.status = GenReflectState::Status::max_cycles;
      return detail::label_result(std::move(transcript), Architecture::gen_reflect,
                                  *state.current_label, Termination::max_cycles, state.cycle);
    }

    auto ref_bindings = base;
    ref_bindings["table"] = render_relation_table(instance, *state.current_label);
    auto ref_request = render_prompt(templates.get(TemplateRole::reflector), ref_bindings,
                                     reflector.model_id, config.temperature);
    auto response = reflector.backend->complete(ref_request);
    auto critique = parse_critique(response.content);
    transcript.append({AgentRole::reflector, detail::summarize_request(ref_request), response.content,
                       critique.actionable ? "actionable" : "APPROVED", state.cycle});

    if (!critique.actionable) {
      state.status = GenReflectState::Status::approved;
      return detail::label_result(std::move(transcript), Architecture::gen_reflect,
                                  *state.current_label, Termination::approved, state.cycle);
    }
    state.critiques.push_back(std::move(critique));
    ++state.cycle;
  }
}

}  // namespace relagent
