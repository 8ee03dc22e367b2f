#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relagent/dataset.hpp"
#include "relagent/types.hpp"

namespace relagent {

/// Where one agent role sends its requests.
struct RoleBinding {
  std::string base_url;
  std::string model_id;
  std::string api_key;
  double requests_per_minute = 0.0;  // 0 = unthrottled
  double burst = 1.0;

  bool operator==(const RoleBinding&) const = default;
};

/// Role keys accepted in [roles.*]: classifier, generator, reflector,
/// orchestrator, specialist, example_generator, example_selector, embedding.
const std::vector<std::string>& known_roles();
/// Roles an architecture needs bound.
std::vector<std::string> required_roles(Architecture architecture);

struct RunConfig {
  Architecture architecture = Architecture::zero_shot;
  DatasetId dataset = DatasetId::core;
  std::filesystem::path data_dir;
  Split split = Split::test;
  std::map<std::string, RoleBinding> roles;
  EngineConfig engine;
  int parallelism = 4;
  std::optional<std::size_t> limit;
  std::filesystem::path output_dir = "runs/default";
  // Response cache. Unset means <output_dir>/cache in live mode and memory
  // only in scripted mode.
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> scripted;
  std::optional<std::filesystem::path> templates_dir;
  std::optional<std::filesystem::path> specialists;
  bool exclude_no_relation = false;
  std::size_t embed_batch = 64;
  int max_retries = 5;

  /// Throws InvalidConfig: missing role bindings, parallelism < 1, invalid
  /// engine settings, or live-mode bindings without base_url or API key.
  void validate() const;

  /// Settings that determine results (no secrets, paths of outputs, or
  /// parallelism), in canonical form.
  json fingerprint() const;
  std::string digest() const;
  /// "<architecture>-<dataset>-<first 12 hex of digest>"
  std::string run_id() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// Replaces ${NAME} with the variable's value; unknown names become "".
std::string interpolate_env(std::string_view text, const EnvLookup& env = process_env);

/// Parses TOML. Relative paths resolve against `base_dir`. Role API keys
/// default to {ROLE}_API_KEY, then API_KEY, from the environment.
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                           const EnvLookup& env = process_env);
RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

/// Fills API keys left empty from the environment, as parse_run_config does.
void apply_env_api_keys(RunConfig& config, const EnvLookup& env = process_env);

}  // namespace relagent
