#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/dataset.hpp"
#include "relagent/error.hpp"
#include "relagent/types.hpp"

namespace testing {

inline std::filesystem::path fixtures_dir() { return RELAGENT_FIXTURES_DIR; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("relagent-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Instance whose entities are located by their first occurrence.
inline relagent::RelationInstance make_instance(std::string id, std::string sentence, const std::string& head,
                                                const std::string& tail, std::optional<std::string> gold,
                                                relagent::DatasetId dataset = relagent::DatasetId::core) {
  relagent::RelationInstance r;
  r.id = std::move(id);
  r.sentence = std::move(sentence);
  auto h = r.sentence.find(head);
  auto t = r.sentence.find(tail);
  r.head = {head, h, h + head.size()};
  r.tail = {tail, t, t + tail.size()};
  r.gold_label = std::move(gold);
  r.dataset = dataset;
  return r;
}

inline relagent::Endpoint scripted_endpoint(std::vector<std::string> script,
                                            std::shared_ptr<relagent::ScriptedBackend>* out = nullptr) {
  auto backend = std::make_shared<relagent::ScriptedBackend>(std::move(script));
  if (out) *out = backend;
  return {backend, "scripted-model"};
}

}  // namespace testing
