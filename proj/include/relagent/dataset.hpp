#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relagent/types.hpp"

namespace relagent {

enum class Split { train, dev, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct Dataset {
  DatasetId id = DatasetId::custom;
  LabelSet label_set;
  std::map<Split, std::vector<RelationInstance>> splits;

  const std::vector<RelationInstance>& split(Split s) const;
  std::size_t size() const;
};

struct DatasetSummary {
  std::map<std::string, std::size_t> split_counts;
  /// split name -> label -> count
  std::map<std::string, std::map<std::string, std::size_t>> label_histogram;
};

DatasetSummary summarize(const Dataset& dataset);

/// Canonical label vocabularies for the shipped benchmarks. Every dataset
/// normalizes its no-relation spelling ("Other", "undefined") to
/// "no_relation".
LabelSet builtin_label_set(DatasetId id);

/// Reads a benchmark from its published file layout under `source_dir`:
///
///  - core:    train.json, test.json, optional dev.json; JSON array (or JSONL)
///             of {context, e1_name, e2_name, e1_start, e1_end, e2_start,
///             e2_end, relation} with byte offsets, end exclusive.
///  - refind:  train_refind_official.json, test_refind_official.json,
///             optional dev_refind_official.json; TACRED-style {id, token[],
///             e1_start, e1_end, e2_start, e2_end, relation} with token
///             offsets, end exclusive.
///  - semeval: TRAIN_FILE.TXT, TEST_FILE_FULL.TXT; numbered sentence lines
///             with <e1>/<e2> tags, a label line and a comment line.
///  - custom:  labels.json (a serialized LabelSet) plus train.jsonl,
///             test.jsonl and optional dev.jsonl in the canonical
///             RelationInstance JSONL format.
///
/// Throws MissingFile, SchemaError (with file and line) or UnknownLabel.
Dataset load_dataset(DatasetId id, const std::filesystem::path& source_dir);

/// Deterministic sample of `n` training instances: Fisher-Yates over the
/// train split driven by std::mt19937_64 seeded with `seed`, with
/// rejection-sampled bounded draws so the result is identical across
/// standard libraries. Throws NotEnoughTraining when n exceeds the split.
std::vector<RelationInstance> sample_exemplars(const Dataset& dataset, std::size_t n,
                                               std::uint64_t seed);

/// Canonical JSON Lines (one RelationInstance per line).
std::vector<RelationInstance> read_jsonl(const std::filesystem::path& path, DatasetId dataset);
void write_jsonl(const std::filesystem::path& path, const std::vector<RelationInstance>& instances);

}  // namespace relagent
