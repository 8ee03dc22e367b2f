#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/config.hpp"
#include "relagent/dataset.hpp"
#include "relagent/error.hpp"
#include "relagent/evaluation.hpp"
#include "relagent/hier_multi.hpp"
#include "relagent/prompting.hpp"
#include "relagent/retrieval_index.hpp"

namespace relagent {

/// CLI exit status for an error: 1 config, 2 data, 3 backend.
int exit_code_for(Errc code);

struct RunHooks {
  /// Stands in for the HTTP backend of a role. The response cache still
  /// wraps whatever this returns.
  std::function<std::shared_ptr<Backend>(const std::string& role, const RoleBinding& binding)>
      backend_factory;
};

struct RunOutcome {
  RunReport report;
  std::filesystem::path run_dir;
  std::size_t live_chat_calls = 0;   // requests that reached a backend
  std::size_t live_embed_calls = 0;
  std::size_t backend_errors = 0;    // instances lost to backend failures
};

/// Resolved role endpoints for a config: scripted, hooked or HTTP backends,
/// call counting, rate limiting and the response cache.
class EndpointSet {
public:
  EndpointSet(const RunConfig& config, const RunHooks& hooks = {});

  Endpoint get(const std::string& role) const;
  std::size_t chat_calls() const;
  std::size_t embed_calls() const;

private:
  std::map<std::string, Endpoint> endpoints_;
  std::vector<std::shared_ptr<CountingBackend>> counters_;
};

/// Loads (or builds and stores) the embedding index over the train split.
/// It is kept under the cache directory keyed by the embedding model and the
/// indexed texts, so reruns skip the embedding calls.
VectorIndex load_or_build_index(const RunConfig& config, const Dataset& dataset, const Endpoint& embedder);

/// The specialist team for a config: explicit file, <data_dir>/specialists.json,
/// then the built-in team for the dataset. Validated against `labels`.
SpecialistTeam resolve_specialists(const RunConfig& config, const LabelSet& labels);

TemplateSet resolve_templates(const RunConfig& config);

/// Runs the configured architecture over the split with a bounded worker
/// pool and writes transcripts/, predictions.jsonl, pools/ (dyn_ex),
/// manifest.json and report.{json,csv,txt} into config.output_dir.
/// Throws on configuration and data errors; per-instance failures become
/// error records.
RunOutcome run(const RunConfig& config, const RunHooks& hooks = {});

/// Comparison table over completed run directories. Throws MissingReport.
RenderedReport report(const std::vector<std::filesystem::path>& run_dirs);

struct LeakageFinding {
  std::string where;  // "exemplars", "index", or "pool:<instance>"
  std::string instance_id;
};

/// Evaluated instance ids that reappear as exemplars, index entries or pool
/// sources, read from the run's manifest and pools.
std::vector<LeakageFinding> check_leakage(const std::filesystem::path& run_dir);

/// File name used for an instance's transcript and pool.
std::string instance_file_stem(const std::string& instance_id);

}  // namespace relagent
