#include "relagent/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "relagent/error.hpp"
#include "relagent/util.hpp"

namespace relagent {

namespace {

constexpr const char* kNoRelation = "no_relation";

[[noreturn]] void schema_error(const std::filesystem::path& file, std::size_t line,
                               const std::string& what) {
  throw Error(Errc::SchemaError, fmt::format("{}:{}: {}", file.string(), line, what));
}

std::string canonical_label(const LabelSet& labels, const std::string& raw,
                            const std::filesystem::path& file, std::size_t line) {
  if (auto l = labels.normalize(raw)) return *l;
  throw Error(Errc::UnknownLabel,
              fmt::format("{}:{}: label '{}' is not declared for {}", file.string(), line, raw,
                          to_string(labels.dataset())));
}

RelationInstance checked(RelationInstance instance, const LabelSet& labels,
                         const std::filesystem::path& file, std::size_t line) {
  try {
    validate_instance(instance, labels);
  } catch (const Error& e) {
    schema_error(file, line, e.what());
  }
  return instance;
}

// JSON array file, or JSON Lines when the file does not parse as one document.
std::vector<std::pair<std::size_t, json>> read_json_records(const std::filesystem::path& file) {
  const auto text = read_file(file);
  std::vector<std::pair<std::size_t, json>> records;
  auto whole = json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_array()) {
    std::size_t i = 0;
    for (auto& item : whole) records.emplace_back(++i, std::move(item));
    return records;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto item = json::parse(line, nullptr, false);
    if (item.is_discarded() || !item.is_object()) schema_error(file, n, "not a JSON object");
    records.emplace_back(n, std::move(item));
  }
  return records;
}

template <typename T>
T field(const json& record, const char* key, const std::filesystem::path& file, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end()) schema_error(file, line, fmt::format("missing field '{}'", key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    schema_error(file, line, fmt::format("field '{}' has the wrong type", key));
  }
}

std::vector<RelationInstance> load_core_split(const std::filesystem::path& file, Split split,
                                              const LabelSet& labels) {
  std::vector<RelationInstance> out;
  for (const auto& [line, record] : read_json_records(file)) {
    RelationInstance r;
    r.dataset = DatasetId::core;
    r.id = record.contains("id") ? fmt::format("core-{}", record["id"].is_string()
                                                              ? record["id"].get<std::string>()
                                                              : record["id"].dump())
                                 : fmt::format("core-{}-{}", to_string(split), line);
    r.sentence = record.contains("context") ? field<std::string>(record, "context", file, line)
                                            : field<std::string>(record, "sentence", file, line);
    EntitySpan e1{field<std::string>(record, "e1_name", file, line),
                  field<std::size_t>(record, "e1_start", file, line),
                  field<std::size_t>(record, "e1_end", file, line)};
    EntitySpan e2{field<std::string>(record, "e2_name", file, line),
                  field<std::size_t>(record, "e2_start", file, line),
                  field<std::size_t>(record, "e2_end", file, line)};
    const bool inverted = record.value("invert_relation", false);
    r.head = inverted ? e2 : e1;
    r.tail = inverted ? e1 : e2;
    r.gold_label = canonical_label(labels, field<std::string>(record, "relation", file, line), file, line);
    out.push_back(checked(std::move(r), labels, file, line));
  }
  return out;
}

std::vector<RelationInstance> load_refind_split(const std::filesystem::path& file, Split split,
                                                const LabelSet& labels) {
  std::vector<RelationInstance> out;
  for (const auto& [line, record] : read_json_records(file)) {
    const auto tokens = field<std::vector<std::string>>(record, "token", file, line);
    std::vector<std::size_t> starts;
    RelationInstance r;
    r.dataset = DatasetId::refind;
    for (const auto& tok : tokens) {
      if (!r.sentence.empty()) r.sentence += ' ';
      starts.push_back(r.sentence.size());
      r.sentence += tok;
    }
    auto span = [&](const char* s_key, const char* e_key) {
      auto s = field<std::size_t>(record, s_key, file, line);
      auto e = field<std::size_t>(record, e_key, file, line);
      if (e == s) ++e;  // single-token span written end-inclusive
      if (s >= e || e > tokens.size()) {
        schema_error(file, line, fmt::format("token span ({},{}) out of range", s, e));
      }
      EntitySpan out_span;
      out_span.start = starts[s];
      out_span.end = starts[e - 1] + tokens[e - 1].size();
      out_span.text = r.sentence.substr(out_span.start, out_span.end - out_span.start);
      return out_span;
    };
    r.head = span("e1_start", "e1_end");
    r.tail = span("e2_start", "e2_end");
    r.id = record.contains("id") ? fmt::format("refind-{}-{}", to_string(split),
                                               record["id"].is_string() ? record["id"].get<std::string>()
                                                                        : record["id"].dump())
                                 : fmt::format("refind-{}-{}", to_string(split), line);
    r.gold_label = canonical_label(labels, field<std::string>(record, "relation", file, line), file, line);
    out.push_back(checked(std::move(r), labels, file, line));
  }
  return out;
}

// Strips <e1>..</e1>/<e2>..</e2> tags, recording the spans they delimited.
bool untag(std::string_view tagged, RelationInstance& r) {
  std::string out;
  std::optional<std::size_t> h0, h1, t0, t1;
  for (std::size_t i = 0; i < tagged.size();) {
    auto at = [&](std::string_view tag) { return tagged.substr(i, tag.size()) == tag; };
    if (at("<e1>")) { h0 = out.size(); i += 4; continue; }
    if (at("</e1>")) { h1 = out.size(); i += 5; continue; }
    if (at("<e2>")) { t0 = out.size(); i += 4; continue; }
    if (at("</e2>")) { t1 = out.size(); i += 5; continue; }
    out += tagged[i++];
  }
  if (!h0 || !h1 || !t0 || !t1) return false;
  r.sentence = std::move(out);
  r.head = {r.sentence.substr(*h0, *h1 - *h0), *h0, *h1};
  r.tail = {r.sentence.substr(*t0, *t1 - *t0), *t0, *t1};
  return true;
}

std::vector<RelationInstance> load_semeval_split(const std::filesystem::path& file, Split split,
                                                 const LabelSet& labels) {
  std::istringstream in(read_file(file));
  std::vector<RelationInstance> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) schema_error(file, n, "expected '<id>\\t\"<sentence>\"'");
    const auto number = trim(std::string_view(line).substr(0, tab));
    auto sentence = trim(std::string_view(line).substr(tab + 1));
    if (sentence.size() >= 2 && sentence.front() == '"' && sentence.back() == '"') {
      sentence = sentence.substr(1, sentence.size() - 2);
    }
    RelationInstance r;
    r.dataset = DatasetId::semeval;
    r.id = fmt::format("semeval-{}-{}", to_string(split), number);
    if (!untag(sentence, r)) schema_error(file, n, "sentence lacks <e1>/<e2> tags");
    const auto sentence_line = n;
    std::string label_line;
    if (!std::getline(in, label_line)) schema_error(file, n, "missing relation line");
    ++n;
    r.gold_label = canonical_label(labels, trim(label_line), file, n);
    // Comment line, then a blank separator.
    std::string rest;
    while (std::getline(in, rest)) {
      ++n;
      if (trim(rest).empty()) break;
    }
    out.push_back(checked(std::move(r), labels, file, sentence_line));
  }
  return out;
}

std::filesystem::path first_existing(const std::filesystem::path& dir,
                                     std::initializer_list<const char*> names, bool required) {
  for (const auto* name : names) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  if (required) {
    throw Error(Errc::MissingFile,
                fmt::format("none of [{}] found in {}", fmt::join(names, ", "), dir.string()));
  }
  return {};
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev" || name == "validation") return Split::dev;
  if (name == "test") return Split::test;
  throw Error(Errc::InvalidConfig, fmt::format("unknown split '{}'", name));
}

const std::vector<RelationInstance>& Dataset::split(Split s) const {
  static const std::vector<RelationInstance> empty;
  auto it = splits.find(s);
  return it == splits.end() ? empty : it->second;
}

std::size_t Dataset::size() const {
  std::size_t n = 0;
  for (const auto& [s, rows] : splits) n += rows.size();
  return n;
}

DatasetSummary summarize(const Dataset& dataset) {
  DatasetSummary summary;
  for (const auto& [split, rows] : dataset.splits) {
    const auto name = std::string(to_string(split));
    summary.split_counts[name] = rows.size();
    auto& hist = summary.label_histogram[name];
    for (const auto& r : rows) {
      if (r.gold_label) ++hist[*r.gold_label];
    }
  }
  return summary;
}

LabelSet builtin_label_set(DatasetId id) {
  switch (id) {
    case DatasetId::core:
      return LabelSet(DatasetId::core,
                      {"acquired_by", "subsidiary_of", "shareholder_of", "merged_with", "brand_of",
                       "competitor_of", "collaboration", "client_of", "product_or_service_of",
                       "regulated_by", "traded_on", kNoRelation},
                      kNoRelation, true, {{"undefined", kNoRelation}});
    case DatasetId::refind:
      return LabelSet(
          DatasetId::refind,
          {"pers:org:employee_of", "pers:org:founder_of", "pers:org:member_of", "pers:title:title",
           "pers:univ:employee_of", "pers:univ:attended", "pers:univ:member_of",
           "pers:gov_agy:member_of", "org:org:acquired_by", "org:org:subsidiary_of",
           "org:org:shares_of", "org:org:agreement_with", "org:date:acquired_on",
           "org:date:formed_on", "org:gpe:operations_in", "org:gpe:headquartered_in",
           "org:gpe:formed_in", "org:money:revenue_of", "org:money:profit_of",
           "org:money:loss_of", "org:money:cost_of", kNoRelation},
          kNoRelation, true, {{"NA", kNoRelation}});
    case DatasetId::semeval: {
      std::vector<std::string> labels;
      for (const auto* family :
           {"Cause-Effect", "Instrument-Agency", "Product-Producer", "Content-Container",
            "Entity-Origin", "Entity-Destination", "Component-Whole", "Member-Collection",
            "Message-Topic"}) {
        labels.push_back(fmt::format("{}(e1,e2)", family));
        labels.push_back(fmt::format("{}(e2,e1)", family));
      }
      labels.emplace_back(kNoRelation);
      return LabelSet(DatasetId::semeval, std::move(labels), kNoRelation, true,
                      {{"Other", kNoRelation}});
    }
    case DatasetId::custom:
      break;
  }
  throw Error(Errc::InvalidConfig, "custom datasets declare their labels in labels.json");
}

Dataset load_dataset(DatasetId id, const std::filesystem::path& source_dir) {
  if (!std::filesystem::is_directory(source_dir)) {
    throw Error(Errc::MissingFile, fmt::format("data directory {} does not exist", source_dir.string()));
  }
  Dataset dataset;
  dataset.id = id;
  using Loader = std::vector<RelationInstance> (*)(const std::filesystem::path&, Split, const LabelSet&);
  Loader loader = nullptr;
  std::map<Split, std::filesystem::path> files;

  switch (id) {
    case DatasetId::core:
      dataset.label_set = builtin_label_set(id);
      loader = load_core_split;
      files[Split::train] = first_existing(source_dir, {"train.json", "train.jsonl"}, true);
      files[Split::dev] = first_existing(source_dir, {"dev.json", "dev.jsonl"}, false);
      files[Split::test] = first_existing(source_dir, {"test.json", "test.jsonl"}, true);
      break;
    case DatasetId::refind:
      dataset.label_set = builtin_label_set(id);
      loader = load_refind_split;
      files[Split::train] = first_existing(source_dir, {"train_refind_official.json", "train.json"}, true);
      files[Split::dev] = first_existing(source_dir, {"dev_refind_official.json", "dev.json"}, false);
      files[Split::test] = first_existing(source_dir, {"test_refind_official.json", "test.json"}, true);
      break;
    case DatasetId::semeval:
      dataset.label_set = builtin_label_set(id);
      loader = load_semeval_split;
      files[Split::train] = first_existing(source_dir, {"TRAIN_FILE.TXT", "train.txt"}, true);
      files[Split::dev] = first_existing(source_dir, {"DEV_FILE.TXT", "dev.txt"}, false);
      files[Split::test] = first_existing(source_dir, {"TEST_FILE_FULL.TXT", "test.txt"}, true);
      break;
    case DatasetId::custom: {
      const auto label_file = first_existing(source_dir, {"labels.json"}, true);
      auto parsed = json::parse(read_file(label_file), nullptr, false);
      if (parsed.is_discarded()) schema_error(label_file, 1, "labels.json is not valid JSON");
      try {
        parsed["dataset_id"] = "custom";
        dataset.label_set = parsed.get<LabelSet>();
      } catch (const json::exception& e) {
        schema_error(label_file, 1, e.what());
      }
      files[Split::train] = first_existing(source_dir, {"train.jsonl"}, true);
      files[Split::dev] = first_existing(source_dir, {"dev.jsonl"}, false);
      files[Split::test] = first_existing(source_dir, {"test.jsonl"}, true);
      break;
    }
  }

  std::set<std::string> seen;
  for (const auto& [split, file] : files) {
    if (file.empty()) {
      dataset.splits[split] = {};
      continue;
    }
    std::vector<RelationInstance> rows;
    if (id == DatasetId::custom) {
      rows = read_jsonl(file, DatasetId::custom);
      std::size_t line = 0;
      for (auto& r : rows) {
        ++line;
        if (r.gold_label) {
          if (auto l = dataset.label_set.normalize(*r.gold_label)) {
            r.gold_label = *l;
          } else {
            throw Error(Errc::UnknownLabel, fmt::format("{}:{}: label '{}' is not declared",
                                                        file.string(), line, *r.gold_label));
          }
        }
        r = checked(std::move(r), dataset.label_set, file, line);
      }
    } else {
      rows = loader(file, split, dataset.label_set);
    }
    for (const auto& r : rows) {
      if (!seen.insert(r.id).second) {
        throw Error(Errc::SchemaError, fmt::format("{}: duplicate instance id '{}'", file.string(), r.id));
      }
    }
    dataset.splits[split] = std::move(rows);
  }
  return dataset;
}

std::vector<RelationInstance> sample_exemplars(const Dataset& dataset, std::size_t n,
                                               std::uint64_t seed) {
  const auto& train = dataset.split(Split::train);
  if (n > train.size()) {
    throw Error(Errc::NotEnoughTraining,
                fmt::format("asked for {} exemplars but the train split has {}", n, train.size()));
  }
  std::mt19937_64 rng(seed);
  auto bounded = [&](std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    return x % bound;
  };
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<RelationInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded(order.size() - i));
    std::swap(order[i], order[j]);
    out.push_back(train[order[i]]);
  }
  return out;
}

std::vector<RelationInstance> read_jsonl(const std::filesystem::path& path, DatasetId dataset) {
  std::istringstream in(read_file(path));
  std::vector<RelationInstance> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) schema_error(path, n, "not a JSON object");
    try {
      if (!record.contains("dataset_id")) record["dataset_id"] = to_string(dataset);
      out.push_back(record.get<RelationInstance>());
    } catch (const json::exception& e) {
      schema_error(path, n, e.what());
    } catch (const Error& e) {
      schema_error(path, n, e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<RelationInstance>& instances) {
  std::string out;
  for (const auto& r : instances) {
    out += json(r).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace relagent
