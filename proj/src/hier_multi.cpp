#include "relagent/hier_multi.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "engine_support.hpp"
#include "relagent/evaluation.hpp"
#include "relagent/util.hpp"

namespace relagent {

// Generated at build time from data/specialists/*.json.
const std::map<std::string, std::string>& builtin_specialist_texts();

void SpecialistTeam::validate(const LabelSet& labels) const {
  if (specialists.empty()) throw Error(Errc::InvalidPartition, "no specialists defined");
  std::set<std::string> ids_seen;
  std::map<std::string, std::string> owner;
  for (const auto& s : specialists) {
    if (s.id.empty() || !ids_seen.insert(s.id).second) {
      throw Error(Errc::InvalidPartition, fmt::format("specialist id '{}' is empty or repeated", s.id));
    }
    if (s.id == kNoRelationRoute) {
      throw Error(Errc::InvalidPartition, "specialist id collides with the no-relation route");
    }
    if (s.allowed_labels.empty()) {
      throw Error(Errc::InvalidPartition, fmt::format("specialist '{}' has no labels", s.id));
    }
    for (const auto& l : s.allowed_labels) {
      if (!labels.contains(l)) {
        throw Error(Errc::InvalidPartition,
                    fmt::format("specialist '{}' lists unknown label '{}'", s.id, l));
      }
      if (l == labels.no_relation_label()) {
        throw Error(Errc::InvalidPartition,
                    fmt::format("specialist '{}' must not own the no-relation label", s.id));
      }
      if (auto [it, inserted] = owner.emplace(l, s.id); !inserted) {
        throw Error(Errc::InvalidPartition, fmt::format("label '{}' belongs to both '{}' and '{}'", l,
                                                        it->second, s.id));
      }
    }
  }
  for (const auto& l : labels.labels()) {
    if (l != labels.no_relation_label() && !owner.count(l)) {
      throw Error(Errc::InvalidPartition, fmt::format("label '{}' is not covered by any specialist", l));
    }
  }
}

const SpecialistSpec* SpecialistTeam::find(std::string_view id) const {
  for (const auto& s : specialists) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::vector<std::string> SpecialistTeam::ids() const {
  std::vector<std::string> out;
  for (const auto& s : specialists) out.push_back(s.id);
  return out;
}

SpecialistTeam SpecialistTeam::from_json(const json& j) {
  SpecialistTeam team;
  try {
    team.dataset = parse_dataset_id(j.at("dataset_id").get<std::string>());
    for (const auto& s : j.at("specialists")) {
      team.specialists.push_back({s.at("id").get<std::string>(), s.at("name").get<std::string>(),
                                  s.value("description", std::string()),
                                  s.at("labels").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidPartition, fmt::format("malformed specialist file: {}", e.what()));
  }
  return team;
}

json SpecialistTeam::to_json() const {
  json list = json::array();
  for (const auto& s : specialists) {
    list.push_back(
        {{"id", s.id}, {"name", s.name}, {"description", s.description}, {"labels", s.allowed_labels}});
  }
  return json{{"dataset_id", to_string(dataset)}, {"specialists", list}};
}

SpecialistTeam SpecialistTeam::load(const std::filesystem::path& path) {
  auto parsed = json::parse(read_file(path), nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(Errc::InvalidPartition, fmt::format("{} is not valid JSON", path.string()));
  }
  return from_json(parsed);
}

SpecialistTeam builtin_specialists(DatasetId dataset) {
  const auto& texts = builtin_specialist_texts();
  auto it = texts.find(std::string(to_string(dataset)));
  if (it == texts.end()) {
    throw Error(Errc::InvalidConfig,
                fmt::format("no built-in specialists for dataset '{}'", to_string(dataset)));
  }
  return SpecialistTeam::from_json(json::parse(it->second));
}

bool RoutingDecision::bypass() const { return target == kNoRelationRoute; }

namespace {

std::string first_line(std::string_view text) {
  auto t = trim(text);
  return trim(std::string_view(t).substr(0, t.find('\n')));
}

bool mentions_no_relation(const std::string& lowered, const LabelSet& labels) {
  if (lowered.find(to_lower(labels.no_relation_label())) != std::string::npos) return true;
  if (lowered.find("no relation") != std::string::npos) return true;
  if (lowered.find("no_relation") != std::string::npos) return true;
  for (const auto& [alias, target] : labels.aliases()) {
    if (trim(lowered) == to_lower(alias)) return true;
  }
  return false;
}

std::optional<std::string> route_in(const std::string& text, const SpecialistTeam& team,
                                    const LabelSet& labels) {
  const auto lowered = to_lower(text);
  static const std::regex agent_re(R"(agent\s*#?\s*(\d+))", std::regex::icase);
  std::set<long> numbers;
  for (auto it = std::sregex_iterator(lowered.begin(), lowered.end(), agent_re);
       it != std::sregex_iterator(); ++it) {
    numbers.insert(std::stol((*it)[1].str()));
  }
  if (numbers.size() == 1) {
    const auto n = *numbers.begin();
    if (n >= 1 && static_cast<std::size_t>(n) <= team.specialists.size()) {
      return team.specialists[static_cast<std::size_t>(n - 1)].id;
    }
    return std::nullopt;
  }
  if (numbers.size() > 1) return std::nullopt;

  std::vector<std::string> named;
  for (const auto& s : team.specialists) {
    if (lowered.find(to_lower(s.id)) != std::string::npos ||
        lowered.find(to_lower(s.name)) != std::string::npos) {
      named.push_back(s.id);
    }
  }
  if (named.size() == 1) return named.front();
  if (named.empty() && mentions_no_relation(lowered, labels)) return std::string(kNoRelationRoute);
  return std::nullopt;
}

std::string render_team(const SpecialistTeam& team) {
  std::string out;
  for (std::size_t i = 0; i < team.specialists.size(); ++i) {
    const auto& s = team.specialists[i];
    out += fmt::format("Agent {} ({}): {}\n  Labels: {}\n", i + 1, s.name, s.description,
                       fmt::join(s.allowed_labels, ", "));
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_specialization(const SpecialistSpec& s) {
  return fmt::format("Specialization: {}. {}", s.name, s.description);
}

}  // namespace

std::optional<std::string> parse_routing(std::string_view raw, const SpecialistTeam& team,
                                         const LabelSet& labels) {
  if (auto r = route_in(first_line(raw), team, labels)) return r;
  return route_in(trim(raw), team, labels);
}

RoutingDecision route(const RelationInstance& instance, const SpecialistTeam& team,
                      const LabelSet& labels, const EngineConfig& config,
                      const TemplateSet& templates, const Endpoint& orchestrator,
                      Transcript& transcript) {
  auto bindings = instance_bindings(instance, labels);
  bindings["specialization"] = render_team(team);
  bindings["no_relation"] = labels.no_relation_label();
  auto request = render_prompt(templates.get(TemplateRole::orchestrator_router), bindings,
                               orchestrator.model_id, config.temperature);
  const auto correction = fmt::format(
      "That is not a valid routing decision. Reply with exactly \"Agent <number>\" for one of the "
      "{} agents listed, or {}.",
      team.specialists.size(), labels.no_relation_label());
  auto asked = detail::ask_with_reask<std::string>(
      orchestrator, std::move(request),
      [&](const std::string& raw) {
        auto target = parse_routing(raw, team, labels);
        if (!target) {
          throw Error(Errc::UnroutableResponse,
                      fmt::format("reply '{}' names no listed agent", first_line(raw)));
        }
        return *target;
      },
      [](const std::string& t) { return fmt::format("route:{}", t); }, transcript,
      AgentRole::orchestrator, 0, correction);
  if (!asked.value) throw Error(Errc::UnroutableResponse, asked.error);
  return RoutingDecision{*asked.value, transcript.turns().back().raw_response};
}

std::string routing_gold(const RelationInstance& instance, const SpecialistTeam& team,
                         const LabelSet& labels) {
  if (!instance.gold_label) {
    throw Error(Errc::Precondition, fmt::format("instance {} has no gold label", instance.id));
  }
  if (*instance.gold_label == labels.no_relation_label()) return kNoRelationRoute;
  for (const auto& s : team.specialists) {
    if (std::find(s.allowed_labels.begin(), s.allowed_labels.end(), *instance.gold_label) !=
        s.allowed_labels.end()) {
      return s.id;
    }
  }
  throw Error(Errc::InvalidPartition,
              fmt::format("label '{}' is not owned by any specialist", *instance.gold_label));
}

HierResult run_hier_multi(const RelationInstance& instance, const LabelSet& labels,
                          const SpecialistTeam& team, const EngineConfig& config,
                          const TemplateSet& templates, const Endpoint& orchestrator,
                          const Endpoint& specialist) {
  config.validate();
  Transcript transcript(instance.id);
  HierResult out;

  RoutingDecision decision;
  try {
    decision = route(instance, team, labels, config, templates, orchestrator, transcript);
  } catch (const Error& e) {
    if (e.code() != Errc::UnroutableResponse) throw;
    out.result = detail::error_result(std::move(transcript), Architecture::hier_multi, e.what(), 0);
    return out;
  }
  out.routing = decision;
  if (decision.bypass()) {
    out.result = detail::label_result(std::move(transcript), Architecture::hier_multi,
                                      labels.no_relation_label(), Termination::single_pass, 0);
    return out;
  }

  const auto& spec = *team.find(decision.target);
  const auto allowed = labels.restricted_to(spec.allowed_labels);
  const auto correction = detail::label_correction(allowed.labels());
  HierState state;
  std::vector<std::string> feedback;
  std::optional<std::string> last_valid;

  for (int attempt = 1; attempt <= config.max_classification_attempts; ++attempt) {
    auto bindings = instance_bindings(instance, allowed);
    bindings["specialization"] = render_specialization(spec);
    bindings["critique"] =
        feedback.empty() ? std::string()
                         : fmt::format("\nFeedback from the orchestrator:\n{}\n", fmt::join(feedback, "\n"));
    auto request = render_prompt(templates.get(TemplateRole::specialist), bindings,
                                 specialist.model_id, config.temperature);

    // In-set labels parse against the specialist's set; anything else that
    // still names a dataset label is an out-of-set answer.
    struct Answer {
      std::string label;
      bool in_set = true;
    };
    auto asked = detail::ask_with_reask<Answer>(
        specialist, std::move(request),
        [&](const std::string& raw) {
          try {
            return Answer{parse_label(raw, allowed), true};
          } catch (const Error&) {
            return Answer{parse_label(raw, labels), false};
          }
        },
        [](const Answer& a) { return a.in_set ? a.label : fmt::format("out_of_set:{}", a.label); },
        transcript, AgentRole::specialist, attempt, correction);
    if (!asked.value) {
      return {detail::error_result(std::move(transcript), Architecture::hier_multi, asked.error, attempt),
              decision};
    }
    const auto& answer = *asked.value;

    if (!answer.in_set) {
      state.attempts.push_back({answer.label, HierState::Verdict::rejected});
      feedback.push_back(fmt::format(
          "Attempt {}: '{}' is not one of your permissible labels. Choose only from: {}.", attempt,
          answer.label, fmt::join(allowed.labels(), ", ")));
      continue;
    }
    last_valid = answer.label;

    if (answer.label == labels.no_relation_label()) {
      ++state.no_relation_count;
      if (state.no_relation_count >= config.no_relation_repeat_limit) {
        state.attempts.push_back({answer.label, HierState::Verdict::rejected});
        state.status = HierState::Status::no_relation_exit;
        out.result = detail::label_result(std::move(transcript), Architecture::hier_multi,
                                          labels.no_relation_label(), Termination::no_relation_repeat,
                                          attempt);
        return out;
      }
    }

    if (attempt == config.max_classification_attempts) {
      state.attempts.push_back({answer.label, HierState::Verdict::rejected});
      break;
    }

    auto verify_bindings = instance_bindings(instance, allowed);
    verify_bindings["specialization"] =
        fmt::format("{}\nPermissible labels: {}", render_specialization(spec),
                    fmt::join(allowed.labels(), ", "));
    verify_bindings["proposed"] = answer.label;
    auto verify_request = render_prompt(templates.get(TemplateRole::orchestrator_verifier),
                                        verify_bindings, orchestrator.model_id, config.temperature);
    auto response = orchestrator.backend->complete(verify_request);
    auto verdict = parse_verdict(response.content);
    transcript.append({AgentRole::orchestrator, detail::summarize_request(verify_request),
                       response.content, verdict.accepted ? "ACCEPT" : "REJECT", attempt});
    if (verdict.accepted) {
      state.attempts.push_back({answer.label, HierState::Verdict::accepted});
      state.status = HierState::Status::accepted;
      out.result = detail::label_result(std::move(transcript), Architecture::hier_multi, answer.label,
                                        Termination::approved, attempt);
      return out;
    }
    state.attempts.push_back({answer.label, HierState::Verdict::rejected});
    feedback.push_back(fmt::format(
        "Attempt {}: you answered '{}'. {} Reconsider and select an alternative relation label.",
        attempt, answer.label, verdict.feedback.empty() ? "The orchestrator rejected it." : verdict.feedback));
  }

  state.status = HierState::Status::max_attempts;
  out.result = detail::label_result(std::move(transcript), Architecture::hier_multi,
                                    last_valid.value_or(labels.no_relation_label()),
                                    Termination::max_cycles, config.max_classification_attempts);
  return out;
}

}  // namespace relagent
