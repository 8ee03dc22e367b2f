#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/types.hpp"

namespace relagent {

struct Neighbor {
  std::string instance_id;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exact cosine-similarity index. Vectors are L2-normalized on insert and
/// the index is immutable once queried concurrently.
class VectorIndex {
public:
  explicit VectorIndex(std::size_t dimension = 0) : dimension_(dimension) {}

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> vector(std::size_t row) const;

  /// Throws DimensionMismatch on a wrong-length or zero vector and
  /// InvalidConfig on a duplicate id. A zero-dimension index adopts the first
  /// vector's dimension.
  void add(std::string instance_id, std::span<const float> vector);

  /// Top-k by cosine similarity, descending, ties by ascending id. k is
  /// clamped to the index size.
  std::vector<Neighbor> query(std::span<const float> vector, std::size_t k) const;

  /// Binary layout (little-endian): magic "RAGVIDX\0", u32 version, u32
  /// dimension, u64 count, u32 metric (0 = cosine), then count*dimension
  /// float32 row-major. Ids go to a sidecar `<path>.ids`, one per line.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

private:
  std::size_t dimension_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> rows_;
};

/// Embeds every instance's entity-marked sentence in batches and indexes it
/// under the instance id.
VectorIndex build_index(const std::vector<RelationInstance>& train, const Endpoint& embedder,
                        std::size_t batch_size = 64);

/// Text embedded for an instance, both at index build and at query time.
std::string retrieval_text(const RelationInstance& instance);

}  // namespace relagent
