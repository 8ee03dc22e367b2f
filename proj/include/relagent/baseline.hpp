#pragma once

#include <vector>

#include "relagent/backend.hpp"
#include "relagent/prompting.hpp"
#include "relagent/types.hpp"

namespace relagent {

/// Labeled demonstrations block used by the few-shot and dynamic prompts.
std::string render_exemplars(const std::vector<RelationInstance>& exemplars);

/// Single classifier call, zero-shot when `exemplars` is empty. One re-ask
/// on an unparseable reply, then an error record.
EngineResult run_baseline(const RelationInstance& instance, const LabelSet& labels,
                          const std::vector<RelationInstance>& exemplars, const EngineConfig& config,
                          const TemplateSet& templates, const Endpoint& classifier);

}  // namespace relagent
