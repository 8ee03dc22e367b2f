#pragma once

#include <string>

#include "relagent/config.hpp"
#include "relagent/hier_multi.hpp"
#include "relagent/types.hpp"

namespace testing {

/// JSON array of n generated examples carrying `label`.
inline std::string generated_examples(int n, const std::string& label, const std::string& tag) {
  relagent::json arr = relagent::json::array();
  for (int i = 0; i < n; ++i) {
    auto head = tag + "Head" + std::to_string(i);
    auto tail = tag + "Tail" + std::to_string(i);
    arr.push_back({{"sentence", head + " is linked to " + tail + "."}, {"head", head}, {"tail", tail}, {"label", label}});
  }
  return arr.dump();
}

/// Stateless scripted spec (rules only) for an architecture, so replies do
/// not depend on the order in which parallel workers reach the backend.
inline relagent::json rule_script(relagent::Architecture arch, const relagent::LabelSet& labels,
                                  const relagent::SpecialistTeam* team = nullptr) {
  using relagent::json;
  auto rules = [](std::initializer_list<std::pair<std::string, std::string>> items) {
    json r = json::array();
    for (const auto& [match, content] : items) r.push_back({{"match", match}, {"content", content}});
    return json{{"rules", r}};
  };
  const auto& first = labels.labels().front();
  const auto& second = labels.labels().size() > 1 ? labels.labels()[1] : first;
  json roles = json::object();
  switch (arch) {
    case relagent::Architecture::zero_shot:
    case relagent::Architecture::few_shot:
      roles["classifier"] = rules({{"", first}});
      break;
    case relagent::Architecture::gen_reflect:
      roles["generator"] = rules({{"Reviewer feedback", second}, {"", first}});
      roles["reflector"] = rules({{"| " + first, "Check the direction. SUGGESTED: " + second}, {"", "APPROVED"}});
      break;
    case relagent::Architecture::hier_multi: {
      const auto& spec = team->specialists.front();
      roles["orchestrator"] = rules({{"Proposed label:", "ACCEPT"}, {"", "Agent 1"}});
      roles["specialist"] = rules({{"", spec.allowed_labels.front()}});
      break;
    }
    case relagent::Architecture::dyn_ex:
      roles["example_generator"] = rules({{"adversarial", generated_examples(10, second, "Neg")},
                                          {"", generated_examples(10, first, "Pos")}});
      roles["example_selector"] = rules({{"", "[0,1,2,3,4,10,11,12,20,21,22,23]"}});
      roles["classifier"] = rules({{"", first}});
      roles["embedding"] = json{{"hashed_embedding_dim", 32}};
      break;
  }
  return json{{"roles", roles}};
}

/// Role bindings with placeholder models for every role of `arch`.
inline void bind_roles(relagent::RunConfig& config) {
  for (const auto& role : relagent::required_roles(config.architecture)) {
    config.roles[role] = relagent::RoleBinding{"http://127.0.0.1:1", role + "-model", "test-key", 0, 1};
  }
}

}  // namespace testing
