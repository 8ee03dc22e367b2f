// Python bindings. Structured values cross the boundary as JSON text and are
// decoded by the relagent package.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <spdlog/spdlog.h>

#include "relagent/dataset.hpp"
#include "relagent/evaluation.hpp"
#include "relagent/prompting.hpp"
#include "relagent/retrieval_index.hpp"
#include "relagent/runner.hpp"

namespace py = pybind11;
using namespace relagent;

namespace {

LabelSet label_set_from(const std::string& dataset_or_json) {
  if (!dataset_or_json.empty() && dataset_or_json.front() == '{') {
    return json::parse(dataset_or_json).get<LabelSet>();
  }
  return builtin_label_set(parse_dataset_id(dataset_or_json));
}

std::string score_json(const std::string& predictions, const std::map<std::string, std::string>& golds,
                       const std::string& labels, bool exclude_no_relation) {
  auto preds = json::parse(predictions).get<std::vector<Prediction>>();
  auto s = score(preds, golds, label_set_from(labels), exclude_no_relation);
  return json{{"macro_f1", s.macro_f1}, {"micro_f1", s.micro_f1}, {"per_label_f1", s.per_label_f1}}.dump();
}

std::string dataset_summary(const std::string& dataset, const std::string& data_dir) {
  auto d = load_dataset(parse_dataset_id(dataset), data_dir);
  auto s = summarize(d);
  return json{{"dataset", to_string(d.id)},
              {"labels", d.label_set.labels()},
              {"split_counts", s.split_counts},
              {"label_histogram", s.label_histogram}}
      .dump();
}

std::string run_config(const std::string& config_path, std::optional<std::string> output_dir,
                       std::optional<std::size_t> limit) {
  auto config = load_run_config(config_path);
  if (output_dir) config.output_dir = *output_dir;
  if (limit) config.limit = *limit;
  RunOutcome outcome;
  {
    py::gil_scoped_release release;
    outcome = run(config);
  }
  json report = outcome.report;
  return json{{"report", report},
              {"run_dir", outcome.run_dir.string()},
              {"live_calls", outcome.live_chat_calls + outcome.live_embed_calls},
              {"backend_errors", outcome.backend_errors}}
      .dump();
}

std::vector<std::pair<std::string, double>> nearest(const std::vector<std::string>& ids,
                                                    const std::vector<std::vector<float>>& vectors,
                                                    const std::vector<float>& query, std::size_t k) {
  if (ids.size() != vectors.size()) throw Error(Errc::InvalidConfig, "ids and vectors differ in length");
  VectorIndex index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.add(ids[i], vectors[i]);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& n : index.query(query, k)) out.emplace_back(n.instance_id, n.similarity);
  return out;
}

}  // namespace

PYBIND11_MODULE(_relagent, m) {
  m.doc() = "Multi-agent relation classification harness";
  spdlog::set_level(spdlog::level::warn);

  py::register_exception<Error>(m, "RelagentError");

  m.def("builtin_labels", [](const std::string& dataset) { return builtin_label_set(parse_dataset_id(dataset)).labels(); },
        py::arg("dataset"));
  m.def("parse_label", [](const std::string& raw, const std::string& labels) { return parse_label(raw, label_set_from(labels)); },
        py::arg("raw"), py::arg("labels"),
        "Canonical label in a model reply. `labels` is a dataset name or a label-set JSON object.");
  m.def("parse_critique",
        [](const std::string& raw) {
          auto c = parse_critique(raw);
          return py::make_tuple(c.actionable, c.suggested_label);
        },
        py::arg("raw"));
  m.def("f1_from_counts", [](long tp, long fp, long fn) { return f1_from_counts({tp, fp, fn}); },
        py::arg("tp"), py::arg("fp"), py::arg("fn"));
  m.def("score_json", &score_json, py::arg("predictions"), py::arg("golds"), py::arg("labels"),
        py::arg("exclude_no_relation") = false);
  m.def("dataset_summary_json", &dataset_summary, py::arg("dataset"), py::arg("data_dir"));
  m.def("run_json", &run_config, py::arg("config_path"), py::arg("output_dir") = std::nullopt,
        py::arg("limit") = std::nullopt);
  m.def("nearest", &nearest, py::arg("ids"), py::arg("vectors"), py::arg("query"), py::arg("k"),
        "Top-k cosine neighbours, ties by ascending id.");
}
