#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "relagent/runner.hpp"
#include "relagent/util.hpp"

using namespace relagent;

namespace {

struct RunFlags {
  std::string config;
  std::string architecture;
  std::string dataset;
  std::string data_dir;
  std::string split;
  long long limit = -1;
  int parallelism = 0;
  long long seed = -1;
  int n_shot = -1;
  bool exclude_no_relation = false;
  std::string scripted;
  std::string output;
};

RunConfig config_from(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.architecture.empty()) c.architecture = parse_architecture(f.architecture);
  if (!f.dataset.empty()) c.dataset = parse_dataset_id(f.dataset);
  if (!f.data_dir.empty()) c.data_dir = f.data_dir;
  if (!f.split.empty()) c.split = parse_split(f.split);
  if (f.limit >= 0) c.limit = static_cast<std::size_t>(f.limit);
  if (f.parallelism > 0) c.parallelism = f.parallelism;
  if (f.seed >= 0) c.engine.exemplar_seed = static_cast<std::uint64_t>(f.seed);
  if (f.n_shot >= 0) c.engine.n_shot = f.n_shot;
  if (f.exclude_no_relation) c.exclude_no_relation = true;
  if (!f.scripted.empty()) c.scripted = f.scripted;
  if (!f.output.empty()) c.output_dir = f.output;
  return c;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "TOML run configuration");
  cmd->add_option("--architecture", f.architecture, "zero_shot, few_shot, gen_reflect, hier_multi or dyn_ex");
  cmd->add_option("--dataset", f.dataset, "core, refind, semeval or custom");
  cmd->add_option("--data-dir", f.data_dir, "Directory holding the dataset files");
  cmd->add_option("--split", f.split, "train, dev or test");
  cmd->add_option("--limit", f.limit, "Evaluate at most N instances");
  cmd->add_option("--parallelism", f.parallelism, "Instances in flight");
  cmd->add_option("--seed", f.seed, "Exemplar sampling seed");
  cmd->add_option("--n-shot", f.n_shot, "Few-shot exemplar count (0, 3 or 5)");
  cmd->add_flag("--exclude-no-relation", f.exclude_no_relation, "Drop no_relation from scoring");
  cmd->add_option("--scripted", f.scripted, "Replay responses from a scripted backend file");
  cmd->add_option("--output", f.output, "Run output directory");
}

int cmd_run(const RunFlags& flags) {
  auto outcome = run(config_from(flags));
  std::cout << render_report({outcome.report}).text;
  std::cout << fmt::format("run {} -> {} ({} instances, {} errors, {} live calls)\n", outcome.report.run_id,
                           outcome.run_dir.string(), outcome.report.instance_count, outcome.report.error_count,
                           outcome.live_chat_calls + outcome.live_embed_calls);
  if (outcome.backend_errors > 0) {
    spdlog::error("{} instances failed on backend errors", outcome.backend_errors);
    return 3;
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& format) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  auto rendered = report(paths);
  if (format == "csv") {
    std::cout << rendered.csv;
  } else if (format == "json") {
    std::cout << rendered.table.dump(2) << "\n";
  } else {
    std::cout << rendered.text;
  }
  return 0;
}

int cmd_validate_data(const std::string& dataset_name, const std::string& data_dir) {
  auto dataset = load_dataset(parse_dataset_id(dataset_name), data_dir);
  auto summary = summarize(dataset);
  json out{{"dataset", to_string(dataset.id)},
           {"label_count", dataset.label_set.size()},
           {"split_counts", summary.split_counts},
           {"label_histogram", summary.label_histogram}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_build_index(const RunFlags& flags, const std::string& index_path) {
  auto config = config_from(flags);
  config.architecture = Architecture::dyn_ex;
  config.validate();
  auto dataset = load_dataset(config.dataset, config.data_dir);
  EndpointSet endpoints(config);
  auto index = load_or_build_index(config, dataset, endpoints.get("embedding"));
  if (!index_path.empty()) index.save(index_path);
  std::cout << fmt::format("index: {} entries, dimension {}, {} embedding calls\n", index.size(),
                           index.dimension(), endpoints.embed_calls());
  return 0;
}

int cmd_inspect(const std::string& path) {
  auto doc = json::parse(read_file(path));
  Transcript t = doc.get<Transcript>();
  std::cout << fmt::format("instance {}  terminated_by={}  final_label={}\n", t.instance_id(),
                           to_string(t.terminated_by()), t.final_label().value_or("-"));
  if (doc.contains("routing")) {
    std::cout << fmt::format("routed to {}\n", doc["routing"].value("target", std::string("?")));
  }
  for (const auto& turn : t.turns()) {
    std::cout << fmt::format("\n[cycle {}] {} -> {}\n", turn.cycle_index, to_string(turn.role), turn.parsed_outcome);
    std::cout << "  request: " << turn.request_summary.substr(0, 200)
              << (turn.request_summary.size() > 200 ? "..." : "") << "\n";
    std::cout << "  reply:   " << turn.raw_response << "\n";
  }
  for (const auto& note : t.notes()) std::cout << "note: " << note << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("relagent"));

  CLI::App app{"Multi-agent relation classification harness"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run an architecture over a dataset split");
  add_run_flags(run_cmd, run_flags);

  std::vector<std::string> report_dirs;
  std::string report_format = "text";
  auto* report_cmd = app.add_subcommand("report", "Compare completed runs");
  report_cmd->add_option("run_dirs", report_dirs, "Run directories")->required();
  report_cmd->add_option("--format", report_format, "text, csv or json")
      ->check(CLI::IsMember({"text", "csv", "json"}));

  std::string vd_dataset, vd_dir;
  auto* validate_cmd = app.add_subcommand("validate-data", "Load a dataset and print its summary");
  validate_cmd->add_option("--dataset", vd_dataset)->required();
  validate_cmd->add_option("--data-dir", vd_dir)->required();

  RunFlags index_flags;
  std::string index_path;
  auto* index_cmd = app.add_subcommand("build-index", "Embed the train split into the retrieval index");
  add_run_flags(index_cmd, index_flags);
  index_cmd->add_option("--index", index_path, "Also write the index to this path");

  std::string transcript_path;
  auto* inspect_cmd = app.add_subcommand("inspect-transcript", "Print a transcript turn by turn");
  inspect_cmd->add_option("path", transcript_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run_cmd) return cmd_run(run_flags);
    if (*report_cmd) return cmd_report(report_dirs, report_format);
    if (*validate_cmd) return cmd_validate_data(vd_dataset, vd_dir);
    if (*index_cmd) return cmd_build_index(index_flags, index_path);
    if (*inspect_cmd) return cmd_inspect(transcript_path);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
