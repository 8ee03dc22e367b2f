#include "relagent/runner.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "relagent/baseline.hpp"
#include "relagent/dyn_example.hpp"
#include "relagent/gen_reflect.hpp"
#include "relagent/http_backend.hpp"
#include "relagent/util.hpp"

namespace relagent {

int exit_code_for(Errc code) {
  if (is_backend_error(code)) return 3;
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::Precondition:
    case Errc::InvalidPartition:
    case Errc::UnboundSlot:
      return 1;
    default:
      return 2;
  }
}

std::string instance_file_stem(const std::string& instance_id) {
  std::string out;
  bool changed = instance_id.empty();
  for (char ch : instance_id) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') {
      out += ch;
    } else {
      out += '_';
      changed = true;
    }
  }
  if (changed || out.front() == '.') out += "-" + sha256_hex(instance_id).substr(0, 8);
  return out;
}

// ---------------------------------------------------------------------------
// Backends

namespace {

std::optional<std::filesystem::path> effective_cache_dir(const RunConfig& config) {
  if (config.cache_dir) return *config.cache_dir;
  if (config.scripted) return std::nullopt;
  return config.output_dir / "cache";
}

std::map<std::string, std::shared_ptr<Backend>> scripted_backends(const RunConfig& config) {
  auto spec = json::parse(read_file(*config.scripted), nullptr, false);
  if (spec.is_discarded() || !spec.is_object()) {
    throw Error(Errc::InvalidConfig, fmt::format("{} is not a JSON object", config.scripted->string()));
  }
  std::map<std::string, std::shared_ptr<Backend>> out;
  try {
    if (spec.contains("roles")) {
      std::shared_ptr<Backend> fallback;
      if (spec.contains("default")) fallback = ScriptedBackend::from_json(spec.at("default"));
      for (const auto& role : required_roles(config.architecture)) {
        if (spec["roles"].contains(role)) {
          out[role] = ScriptedBackend::from_json(spec["roles"][role]);
        } else if (fallback) {
          out[role] = fallback;
        } else {
          throw Error(Errc::InvalidConfig, fmt::format("scripted spec has no entry for role {}", role));
        }
      }
    } else {
      std::shared_ptr<Backend> shared = ScriptedBackend::from_json(spec);
      for (const auto& role : required_roles(config.architecture)) out[role] = shared;
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, fmt::format("malformed scripted spec: {}", e.what()));
  }
  return out;
}

}  // namespace

EndpointSet::EndpointSet(const RunConfig& config, const RunHooks& hooks) {
  std::map<std::string, std::shared_ptr<Backend>> base;
  if (config.scripted && !hooks.backend_factory) base = scripted_backends(config);

  const auto cache_dir = effective_cache_dir(config);
  std::map<std::string, std::shared_ptr<TokenBucket>> buckets;
  std::map<const Backend*, std::shared_ptr<Backend>> wrapped;  // share wrappers between roles

  for (const auto& role : required_roles(config.architecture)) {
    const auto& binding = config.roles.at(role);
    std::shared_ptr<Backend> backend;
    if (hooks.backend_factory) {
      backend = hooks.backend_factory(role, binding);
    } else if (config.scripted) {
      backend = base.at(role);
    } else {
      HttpBackendOptions options;
      options.base_url = binding.base_url;
      options.api_key = binding.api_key;
      options.retry.max_retries = config.max_retries;
      backend = std::make_shared<OpenAiCompatibleBackend>(std::move(options));
      if (binding.requests_per_minute > 0) {
        auto& bucket = buckets[binding.base_url + "\n" + binding.api_key];
        if (!bucket) bucket = std::make_shared<TokenBucket>(binding.requests_per_minute, binding.burst);
        backend = std::make_shared<RateLimitedBackend>(backend, bucket);
      }
    }
    auto& shared = wrapped[backend.get()];
    if (!shared) {
      auto counting = std::make_shared<CountingBackend>(backend);
      counters_.push_back(counting);
      shared = counting;
      if (cache_dir) shared = std::make_shared<CachingBackend>(shared, *cache_dir);
    }
    endpoints_[role] = Endpoint{shared, binding.model_id};
  }
}

Endpoint EndpointSet::get(const std::string& role) const {
  auto it = endpoints_.find(role);
  if (it == endpoints_.end()) throw Error(Errc::InvalidConfig, fmt::format("role {} is not bound", role));
  return it->second;
}

std::size_t EndpointSet::chat_calls() const {
  std::size_t n = 0;
  for (const auto& c : counters_) n += c->chat_calls();
  return n;
}

std::size_t EndpointSet::embed_calls() const {
  std::size_t n = 0;
  for (const auto& c : counters_) n += c->embed_calls();
  return n;
}

// ---------------------------------------------------------------------------
// Run inputs

VectorIndex load_or_build_index(const RunConfig& config, const Dataset& dataset, const Endpoint& embedder) {
  const auto& train = dataset.split(Split::train);
  if (train.empty()) throw Error(Errc::NotEnoughTraining, "the train split is empty; nothing to index");
  std::string key_material = embedder.model_id + "\n";
  for (const auto& r : train) key_material += r.id + "\t" + retrieval_text(r) + "\n";
  const auto key = sha256_hex(key_material).substr(0, 16);

  const auto cache_dir = effective_cache_dir(config);
  std::optional<std::filesystem::path> path;
  if (cache_dir) path = *cache_dir / fmt::format("index-{}.bin", key);
  if (path && std::filesystem::exists(*path)) {
    try {
      auto index = VectorIndex::load(*path);
      if (index.size() == train.size()) {
        spdlog::info("loaded index {} ({} entries)", path->string(), index.size());
        return index;
      }
    } catch (const Error& e) {
      spdlog::warn("rebuilding unreadable index {}: {}", path->string(), e.what());
    }
  }
  auto index = build_index(train, embedder, config.embed_batch);
  if (path) index.save(*path);
  return index;
}

SpecialistTeam resolve_specialists(const RunConfig& config, const LabelSet& labels) {
  SpecialistTeam team;
  if (config.specialists) {
    team = SpecialistTeam::load(*config.specialists);
  } else if (std::filesystem::exists(config.data_dir / "specialists.json")) {
    team = SpecialistTeam::load(config.data_dir / "specialists.json");
  } else {
    team = builtin_specialists(config.dataset);
  }
  team.validate(labels);
  return team;
}

TemplateSet resolve_templates(const RunConfig& config) {
  return config.templates_dir ? TemplateSet::load(*config.templates_dir, config.dataset) : TemplateSet::builtin();
}

// ---------------------------------------------------------------------------
// Run

namespace {

struct InstanceOutcome {
  EngineResult result;
  std::optional<RoutingDecision> routing;
  std::optional<json> pool;
  bool backend_failure = false;
};

EngineResult failure_record(const RelationInstance& instance, Architecture arch, const std::string& what) {
  Transcript t(instance.id);
  t.note(what);
  t.finish(Termination::error, std::nullopt);
  Prediction p;
  p.instance_id = instance.id;
  p.error = what;
  p.architecture = arch;
  p.transcript_ref = instance.id;
  return {std::move(p), std::move(t)};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

RunOutcome run(const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  const auto templates = resolve_templates(config);
  const auto dataset = load_dataset(config.dataset, config.data_dir);
  const auto& labels = dataset.label_set;

  std::vector<RelationInstance> instances = dataset.split(config.split);
  if (config.limit && *config.limit < instances.size()) instances.resize(*config.limit);
  for (const auto& r : instances) {
    if (!r.gold_label) {
      throw Error(Errc::SchemaError, fmt::format("instance {} has no gold label to score against", r.id));
    }
  }

  std::optional<SpecialistTeam> team;
  if (config.architecture == Architecture::hier_multi) team = resolve_specialists(config, labels);

  std::vector<RelationInstance> exemplars;
  if (config.architecture == Architecture::few_shot) {
    exemplars = sample_exemplars(dataset, static_cast<std::size_t>(config.engine.n_shot),
                                 config.engine.exemplar_seed);
  }

  EndpointSet endpoints(config, hooks);
  std::optional<VectorIndex> index;
  std::optional<ExampleRetriever> retriever;
  if (config.architecture == Architecture::dyn_ex) {
    index = load_or_build_index(config, dataset, endpoints.get("embedding"));
    retriever.emplace(*index, dataset.split(Split::train), endpoints.get("embedding"));
  }

  std::vector<InstanceOutcome> outcomes(instances.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < instances.size(); i = next.fetch_add(1)) {
      const auto& instance = instances[i];
      auto& out = outcomes[i];
      try {
        switch (config.architecture) {
          case Architecture::zero_shot:
          case Architecture::few_shot:
            out.result = run_baseline(instance, labels, exemplars, config.engine, templates,
                                      endpoints.get("classifier"));
            break;
          case Architecture::gen_reflect:
            out.result = run_gen_reflect(instance, labels, config.engine, templates,
                                         endpoints.get("generator"), endpoints.get("reflector"));
            break;
          case Architecture::hier_multi: {
            auto r = run_hier_multi(instance, labels, *team, config.engine, templates,
                                    endpoints.get("orchestrator"), endpoints.get("specialist"));
            out.result = std::move(r.result);
            out.routing = std::move(r.routing);
            break;
          }
          case Architecture::dyn_ex: {
            auto r = run_dyn_ex(instance, labels, config.engine, templates, endpoints.get("example_generator"),
                                *retriever, endpoints.get("example_selector"), endpoints.get("classifier"));
            out.result = std::move(r.result);
            out.pool = json{{"pool", r.pool}, {"selection", r.selection}};
            break;
          }
        }
      } catch (const Error& e) {
        out.backend_failure = is_backend_error(e.code());
        spdlog::error("instance {}: {}", instance.id, e.what());
        out.result = failure_record(instance, config.architecture, e.what());
      } catch (const std::exception& e) {
        spdlog::error("instance {}: {}", instance.id, e.what());
        out.result = failure_record(instance, config.architecture, e.what());
      }
      // The baseline reports zero_shot for an empty exemplar list; keep the
      // configured architecture on every record of the run.
      out.result.prediction.architecture = config.architecture;
      auto n = ++done;
      if (n % 50 == 0 || n == instances.size()) spdlog::info("{}/{} instances", n, instances.size());
    }
  };
  {
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism),
                                               std::max<std::size_t>(instances.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Scoring
  std::vector<Prediction> predictions;
  std::map<std::string, std::string> golds;
  RunOutcome outcome;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    predictions.push_back(outcomes[i].result.prediction);
    golds[instances[i].id] = *instances[i].gold_label;
    if (outcomes[i].backend_failure) ++outcome.backend_errors;
  }
  const auto scored = score(predictions, golds, labels, config.exclude_no_relation);

  RunReport report;
  report.run_id = config.run_id();
  report.architecture = config.architecture;
  for (const auto& role : required_roles(config.architecture)) report.model_ids[role] = config.roles.at(role).model_id;
  report.dataset = config.dataset;
  report.macro_f1 = scored.macro_f1;
  report.micro_f1 = scored.micro_f1;
  report.per_label_f1 = scored.per_label_f1;
  report.instance_count = instances.size();
  report.error_count = static_cast<std::size_t>(
      std::count_if(predictions.begin(), predictions.end(), [](const Prediction& p) { return !p.ok(); }));

  json routing_json = nullptr;
  if (team) {
    std::map<std::string, std::string> decisions;
    std::map<std::string, std::string> gold_routes;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      decisions[instances[i].id] = outcomes[i].routing ? outcomes[i].routing->target : std::string(kInvalidLabel);
      gold_routes[instances[i].id] = routing_gold(instances[i], *team, labels);
    }
    report.routing_f1 = score_routing(decisions, gold_routes, team->ids());
  }

  // Manifest
  const auto summary = summarize(dataset);
  json exemplar_ids = json::array();
  for (const auto& e : exemplars) exemplar_ids.push_back(e.id);
  json instance_ids = json::array();
  for (const auto& r : instances) instance_ids.push_back(r.id);
  json manifest{
      {"run_id", report.run_id},
      {"config_digest", config.digest()},
      {"config", config.fingerprint()},
      {"template_hashes", templates.hashes()},
      {"seeds", {{"exemplar_seed", config.engine.exemplar_seed}, {"prng", "mt19937_64"}}},
      {"dataset", {{"id", to_string(config.dataset)},
                   {"split", to_string(config.split)},
                   {"split_counts", summary.split_counts},
                   {"label_count", labels.size()}}},
      {"instance_ids", instance_ids},
      {"exemplar_ids", exemplar_ids},
      {"scoring", {{"exclude_no_relation", config.exclude_no_relation},
                   {"macro_average_over", "labels occurring in gold or predictions"},
                   {"error_records", kInvalidLabel}}},
  };
  if (index) manifest["index_ids"] = index->ids();
  if (team) manifest["specialists"] = team->to_json();
  report.manifest = manifest;

  // Outputs
  const auto& dir = config.output_dir;
  std::filesystem::create_directories(dir);
  std::string predictions_jsonl;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& o = outcomes[i];
    const auto stem = instance_file_stem(instances[i].id);
    json t = o.result.transcript;
    if (o.routing) t["routing"] = {{"target", o.routing->target}, {"rationale", o.routing->rationale}};
    write_file_atomic(dir / "transcripts" / (stem + ".json"), dump(t));
    if (o.pool) write_file_atomic(dir / "pools" / (stem + ".json"), dump(*o.pool));
    json p = o.result.prediction;
    p["transcript_ref"] = "transcripts/" + stem + ".json";
    predictions_jsonl += p.dump() + "\n";
  }
  write_file_atomic(dir / "predictions.jsonl", predictions_jsonl);
  write_file_atomic(dir / "manifest.json", dump(manifest));
  const auto rendered = render_report({report});
  write_file_atomic(dir / "report.json", dump(json(report)));
  write_file_atomic(dir / "report.csv", rendered.csv);
  write_file_atomic(dir / "report.txt", rendered.text);

  outcome.live_chat_calls = endpoints.chat_calls();
  outcome.live_embed_calls = endpoints.embed_calls();
  write_file_atomic(dir / "run_stats.json",
                    dump({{"live_chat_calls", outcome.live_chat_calls},
                          {"live_embed_calls", outcome.live_embed_calls},
                          {"backend_errors", outcome.backend_errors}}));
  outcome.report = std::move(report);
  outcome.run_dir = dir;
  return outcome;
}

RenderedReport report(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<RunReport> reports;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "report.json";
    if (!std::filesystem::exists(path)) {
      throw Error(Errc::MissingReport, fmt::format("{} has no report.json", dir.string()));
    }
    auto parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded()) throw Error(Errc::MissingReport, fmt::format("{} is not valid JSON", path.string()));
    try {
      reports.push_back(parsed.get<RunReport>());
    } catch (const json::exception& e) {
      throw Error(Errc::MissingReport, fmt::format("{} is not a run report: {}", path.string(), e.what()));
    }
  }
  if (reports.empty()) throw Error(Errc::MissingReport, "no run directories given");
  return render_report(reports);
}

std::vector<LeakageFinding> check_leakage(const std::filesystem::path& run_dir) {
  const auto manifest_path = run_dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw Error(Errc::MissingReport, fmt::format("{} has no manifest.json", run_dir.string()));
  }
  const auto manifest = json::parse(read_file(manifest_path));
  std::set<std::string> evaluated;
  for (const auto& id : manifest.at("instance_ids")) evaluated.insert(id.get<std::string>());

  std::vector<LeakageFinding> out;
  auto check = [&](const json& ids, const std::string& where) {
    for (const auto& id : ids) {
      if (evaluated.count(id.get<std::string>())) out.push_back({where, id.get<std::string>()});
    }
  };
  check(manifest.value("exemplar_ids", json::array()), "exemplars");
  check(manifest.value("index_ids", json::array()), "index");

  const auto pools = run_dir / "pools";
  if (std::filesystem::is_directory(pools)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(pools)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const auto doc = json::parse(read_file(file));
      const auto& pool = doc.at("pool");
      for (const auto& e : pool.at("retrieved")) {
        if (e.contains("source_id") && e["source_id"].is_string() && evaluated.count(e["source_id"].get<std::string>())) {
          out.push_back({"pool:" + pool.at("instance_id").get<std::string>(), e["source_id"].get<std::string>()});
        }
      }
    }
  }
  return out;
}

}  // namespace relagent
