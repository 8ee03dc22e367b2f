#include "relagent/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <toml.hpp>

#include "relagent/error.hpp"
#include "relagent/util.hpp"

namespace relagent {

const std::vector<std::string>& known_roles() {
  static const std::vector<std::string> roles{"classifier",        "generator",        "reflector",
                                              "orchestrator",      "specialist",       "example_generator",
                                              "example_selector",  "embedding"};
  return roles;
}

std::vector<std::string> required_roles(Architecture architecture) {
  switch (architecture) {
    case Architecture::zero_shot:
    case Architecture::few_shot:
      return {"classifier"};
    case Architecture::gen_reflect:
      return {"generator", "reflector"};
    case Architecture::hier_multi:
      return {"orchestrator", "specialist"};
    case Architecture::dyn_ex:
      return {"example_generator", "embedding", "example_selector", "classifier"};
  }
  return {};
}

void RunConfig::validate() const {
  engine.validate();
  if (parallelism < 1) {
    throw Error(Errc::InvalidConfig, fmt::format("parallelism must be >= 1, got {}", parallelism));
  }
  if (embed_batch == 0) throw Error(Errc::InvalidConfig, "embed_batch must be >= 1");
  if (max_retries < 0) throw Error(Errc::InvalidConfig, "max_retries must be >= 0");
  if (architecture == Architecture::zero_shot && engine.n_shot != 0) {
    throw Error(Errc::InvalidConfig, "zero_shot runs take no exemplars; use few_shot with n_shot");
  }
  if (data_dir.empty()) throw Error(Errc::InvalidConfig, "data_dir is not set");
  for (const auto& role : required_roles(architecture)) {
    auto it = roles.find(role);
    if (it == roles.end()) {
      throw Error(Errc::InvalidConfig, fmt::format("architecture {} needs a [roles.{}] binding",
                                                   to_string(architecture), role));
    }
    const auto& b = it->second;
    if (b.model_id.empty()) throw Error(Errc::InvalidConfig, fmt::format("roles.{}.model_id is empty", role));
    if (!scripted) {
      if (b.base_url.empty()) {
        throw Error(Errc::InvalidConfig, fmt::format("roles.{}.base_url is empty", role));
      }
      if (b.api_key.empty()) {
        throw Error(Errc::InvalidConfig,
                    fmt::format("no API key for role {}; set API_KEY or {}_API_KEY", role,
                                [&] {
                                  auto up = role;
                                  std::transform(up.begin(), up.end(), up.begin(), ::toupper);
                                  return up;
                                }()));
      }
    }
    if (b.requests_per_minute < 0 || b.burst < 1) {
      throw Error(Errc::InvalidConfig, fmt::format("roles.{} has an invalid rate limit", role));
    }
  }
}

json RunConfig::fingerprint() const {
  json roles_json = json::object();
  for (const auto& role : required_roles(architecture)) {
    const auto& b = roles.at(role);
    roles_json[role] = {{"base_url", scripted ? std::string() : b.base_url}, {"model_id", b.model_id}};
  }
  json j{{"architecture", to_string(architecture)},
         {"dataset", to_string(dataset)},
         {"split", to_string(split)},
         {"roles", roles_json},
         {"engine", engine},
         {"limit", limit ? json(*limit) : json(nullptr)},
         {"exclude_no_relation", exclude_no_relation},
         {"scripted", scripted.has_value()}};
  return j;
}

std::string RunConfig::digest() const { return sha256_hex(fingerprint().dump()); }

std::string RunConfig::run_id() const {
  return fmt::format("{}-{}-{}", to_string(architecture), to_string(dataset), digest().substr(0, 12));
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::string interpolate_env(std::string_view text, const EnvLookup& env) {
  static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
  std::string in(text);
  std::string out;
  auto last = in.cbegin();
  for (auto it = std::sregex_iterator(in.begin(), in.end(), var); it != std::sregex_iterator(); ++it) {
    out.append(last, in.cbegin() + it->position());
    out += env((*it)[1].str()).value_or("");
    last = in.cbegin() + it->position() + it->length();
  }
  out.append(last, in.cend());
  return out;
}

void apply_env_api_keys(RunConfig& config, const EnvLookup& env) {
  for (auto& [role, binding] : config.roles) {
    if (!binding.api_key.empty()) continue;
    auto upper = role;
    std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
    if (auto v = env(upper + "_API_KEY"); v && !v->empty()) {
      binding.api_key = *v;
    } else if (auto v2 = env("API_KEY")) {
      binding.api_key = *v2;
    }
  }
}

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(Errc::InvalidConfig, what); }

void check_keys(const toml::table& table, const std::set<std::string>& allowed, std::string_view where) {
  for (const auto& [key, _] : table) {
    if (!allowed.count(std::string(key.str()))) {
      config_error(fmt::format("unknown key '{}' in {}", key.str(), where));
    }
  }
}

std::optional<std::string> get_string(const toml::table& t, const char* key, const EnvLookup& env) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  if (!node->is_string()) config_error(fmt::format("'{}' must be a string", key));
  return interpolate_env(**node->as_string(), env);
}

template <typename T>
std::optional<T> get_number(const toml::table& t, const char* key) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) return static_cast<T>(*v);
  } else {
    if (node->is_integer()) return static_cast<T>(**node->as_integer());
  }
  config_error(fmt::format("'{}' must be a number", key));
}

std::optional<bool> get_bool(const toml::table& t, const char* key) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  if (!node->is_boolean()) config_error(fmt::format("'{}' must be true or false", key));
  return **node->as_boolean();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                           const EnvLookup& env) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    config_error(fmt::format("TOML parse error at line {}: {}", e.source().begin.line, e.description()));
  }
  check_keys(root,
             {"architecture", "dataset", "data_dir", "split", "parallelism", "limit", "output_dir",
              "cache_dir", "scripted", "templates_dir", "specialists", "exclude_no_relation",
              "embed_batch", "max_retries", "engine", "roles"},
             "run config");

  RunConfig c;
  try {
    if (auto v = get_string(root, "architecture", env)) c.architecture = parse_architecture(*v);
    if (auto v = get_string(root, "dataset", env)) c.dataset = parse_dataset_id(*v);
    if (auto v = get_string(root, "split", env)) c.split = parse_split(*v);
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (auto v = get_string(root, "data_dir", env)) c.data_dir = resolve(base_dir, *v);
  if (auto v = get_string(root, "output_dir", env)) c.output_dir = resolve(base_dir, *v);
  if (auto v = get_string(root, "cache_dir", env)) c.cache_dir = v->empty() ? std::filesystem::path() : resolve(base_dir, *v);
  if (auto v = get_string(root, "scripted", env)) c.scripted = resolve(base_dir, *v);
  if (auto v = get_string(root, "templates_dir", env)) c.templates_dir = resolve(base_dir, *v);
  if (auto v = get_string(root, "specialists", env)) c.specialists = resolve(base_dir, *v);
  if (auto v = get_number<int>(root, "parallelism")) c.parallelism = *v;
  if (auto v = get_number<long long>(root, "limit")) {
    if (*v < 0) config_error("limit must be >= 0");
    c.limit = static_cast<std::size_t>(*v);
  }
  if (auto v = get_bool(root, "exclude_no_relation")) c.exclude_no_relation = *v;
  if (auto v = get_number<long long>(root, "embed_batch")) {
    if (*v < 1) config_error("embed_batch must be >= 1");
    c.embed_batch = static_cast<std::size_t>(*v);
  }
  if (auto v = get_number<int>(root, "max_retries")) c.max_retries = *v;

  if (const auto* engine = root["engine"].as_table()) {
    check_keys(*engine,
               {"max_dialogue_cycles", "max_classification_attempts", "no_relation_repeat_limit",
                "n_generated_positive", "n_generated_negative", "n_retrieved", "n_selected", "n_shot",
                "temperature", "exemplar_seed"},
               "[engine]");
    auto& e = c.engine;
    if (auto v = get_number<int>(*engine, "max_dialogue_cycles")) e.max_dialogue_cycles = *v;
    if (auto v = get_number<int>(*engine, "max_classification_attempts")) e.max_classification_attempts = *v;
    if (auto v = get_number<int>(*engine, "no_relation_repeat_limit")) e.no_relation_repeat_limit = *v;
    if (auto v = get_number<int>(*engine, "n_generated_positive")) e.n_generated_positive = *v;
    if (auto v = get_number<int>(*engine, "n_generated_negative")) e.n_generated_negative = *v;
    if (auto v = get_number<int>(*engine, "n_retrieved")) e.n_retrieved = *v;
    if (auto v = get_number<int>(*engine, "n_selected")) e.n_selected = *v;
    if (auto v = get_number<int>(*engine, "n_shot")) e.n_shot = *v;
    if (auto v = get_number<double>(*engine, "temperature")) e.temperature = *v;
    if (auto v = get_number<long long>(*engine, "exemplar_seed")) e.exemplar_seed = static_cast<std::uint64_t>(*v);
  } else if (root.contains("engine")) {
    config_error("[engine] must be a table");
  }

  if (const auto* roles = root["roles"].as_table()) {
    for (const auto& [key, node] : *roles) {
      const std::string role(key.str());
      if (std::find(known_roles().begin(), known_roles().end(), role) == known_roles().end()) {
        config_error(fmt::format("unknown role '{}'", role));
      }
      const auto* t = node.as_table();
      if (!t) config_error(fmt::format("[roles.{}] must be a table", role));
      check_keys(*t, {"base_url", "model_id", "api_key", "requests_per_minute", "burst"},
                 fmt::format("[roles.{}]", role));
      RoleBinding b;
      b.base_url = get_string(*t, "base_url", env).value_or("");
      b.model_id = get_string(*t, "model_id", env).value_or("");
      b.api_key = get_string(*t, "api_key", env).value_or("");
      b.requests_per_minute = get_number<double>(*t, "requests_per_minute").value_or(0.0);
      b.burst = get_number<double>(*t, "burst").value_or(1.0);
      c.roles[role] = std::move(b);
    }
  } else if (root.contains("roles")) {
    config_error("[roles] must be a table");
  }
  apply_env_api_keys(c, env);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    config_error(e.what());
  }
  return parse_run_config(text, path.parent_path(), env);
}

}  // namespace relagent
