#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/prompting.hpp"
#include "relagent/types.hpp"

namespace relagent {

/// Generator-Reflection loop state for one instance.
struct GenReflectState {
  enum class Status { running, approved, max_cycles };

  std::optional<std::string> current_label;
  int cycle = 1;
  std::vector<Critique> critiques;
  std::vector<std::string> proposals;  // generator label per cycle
  Status status = Status::running;
};

/// Feedback block appended to later generator prompts: every earlier
/// proposal with the critique it received.
std::string render_critique_history(const GenReflectState& state);

/// Generator proposes a label; the reflector approves it or critiques it;
/// the generator revises with the full critique history. Stops on approval
/// or when the generation count reaches config.max_dialogue_cycles, keeping
/// the latest label. The capped final generation is not sent to the
/// reflector.
EngineResult run_gen_reflect(const RelationInstance& instance, const LabelSet& labels,
                             const EngineConfig& config, const TemplateSet& templates,
                             const Endpoint& generator, const Endpoint& reflector);

}  // namespace relagent
