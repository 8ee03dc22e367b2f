#include "relagent/retrieval_index.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <fmt/format.h>

#include "relagent/error.hpp"
#include "relagent/prompting.hpp"
#include "relagent/util.hpp"

namespace relagent {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'A', 'G', 'V', 'I', 'D', 'X', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMetricCosine = 0;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw Error(Errc::InvalidIndexFile, "truncated index file");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  offset += sizeof(T);
  return static_cast<T>(u);
}

}  // namespace

std::span<const float> VectorIndex::vector(std::size_t row) const {
  return std::span<const float>(data_).subspan(row * dimension_, dimension_);
}

void VectorIndex::add(std::string instance_id, std::span<const float> vector) {
  if (dimension_ == 0 && ids_.empty()) dimension_ = vector.size();
  if (vector.size() != dimension_ || dimension_ == 0) {
    throw Error(Errc::DimensionMismatch,
                fmt::format("vector for '{}' has dimension {}, index expects {}", instance_id,
                            vector.size(), dimension_));
  }
  if (rows_.count(instance_id)) {
    throw Error(Errc::InvalidConfig, fmt::format("duplicate index id '{}'", instance_id));
  }
  double norm = 0.0;
  for (float x : vector) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(Errc::DimensionMismatch, fmt::format("vector for '{}' cannot be normalized", instance_id));
  }
  for (float x : vector) data_.push_back(static_cast<float>(x / norm));
  rows_.emplace(instance_id, ids_.size());
  ids_.push_back(std::move(instance_id));
}

std::vector<Neighbor> VectorIndex::query(std::span<const float> vector, std::size_t k) const {
  if (vector.size() != dimension_) {
    throw Error(Errc::DimensionMismatch,
                fmt::format("query has dimension {}, index expects {}", vector.size(), dimension_));
  }
  if (k == 0) throw Error(Errc::Precondition, "k must be at least 1");
  double qnorm = 0.0;
  for (float x : vector) qnorm += static_cast<double>(x) * x;
  qnorm = std::sqrt(qnorm);
  if (!(qnorm > 0.0)) throw Error(Errc::DimensionMismatch, "query vector cannot be normalized");

  std::vector<double> query(vector.size());
  for (std::size_t d = 0; d < vector.size(); ++d) query[d] = vector[d] / qnorm;

  std::vector<double> sims(ids_.size());
  for (std::size_t row = 0; row < ids_.size(); ++row) {
    const float* v = data_.data() + row * dimension_;
    double dot = 0.0;
    for (std::size_t d = 0; d < dimension_; ++d) dot += query[d] * v[d];
    sims[row] = std::clamp(dot, -1.0, 1.0);
  }

  std::vector<std::size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return ids_[a] < ids_[b];
                    });
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids_[order[i]], sims[order[i]]});
  return out;
}

void VectorIndex::save(const std::filesystem::path& path) const {
  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension_));
  put_le<std::uint64_t>(out, ids_.size());
  put_le<std::uint32_t>(out, kMetricCosine);
  out.reserve(out.size() + data_.size() * 4);
  for (float x : data_) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));

  std::string id_lines;
  for (const auto& id : ids_) {
    if (id.find('\n') != std::string::npos) {
      throw Error(Errc::InvalidIndexFile, fmt::format("id '{}' contains a newline", id));
    }
    id_lines += id;
    id_lines += '\n';
  }
  auto sidecar = path;
  sidecar += ".ids";
  write_file_atomic(sidecar, id_lines);
  write_file_atomic(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(Errc::InvalidIndexFile, fmt::format("{} is not an index file", path.string()));
  }
  std::size_t offset = kMagic.size();
  const auto version = get_le<std::uint32_t>(bytes, offset);
  if (version != kVersion) {
    throw Error(Errc::InvalidIndexFile, fmt::format("unsupported index version {}", version));
  }
  const auto dimension = get_le<std::uint32_t>(bytes, offset);
  const auto count = get_le<std::uint64_t>(bytes, offset);
  const auto metric = get_le<std::uint32_t>(bytes, offset);
  if (metric != kMetricCosine) throw Error(Errc::InvalidIndexFile, "unknown metric");
  if (bytes.size() - offset != count * dimension * 4) {
    throw Error(Errc::InvalidIndexFile, "index payload size does not match header");
  }
  auto sidecar = path;
  sidecar += ".ids";
  const auto id_text = read_file(sidecar);
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start < id_text.size()) {
    auto end = id_text.find('\n', start);
    if (end == std::string::npos) end = id_text.size();
    ids.push_back(id_text.substr(start, end - start));
    start = end + 1;
  }
  if (ids.size() != count) throw Error(Errc::InvalidIndexFile, "id sidecar does not match header");

  VectorIndex index(dimension);
  index.data_.reserve(count * dimension);
  for (std::uint64_t i = 0; i < count * dimension; ++i) {
    index.data_.push_back(std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset)));
  }
  for (std::size_t row = 0; row < ids.size(); ++row) {
    if (!index.rows_.emplace(ids[row], row).second) {
      throw Error(Errc::InvalidIndexFile, fmt::format("duplicate id '{}'", ids[row]));
    }
  }
  index.ids_ = std::move(ids);
  return index;
}

std::string retrieval_text(const RelationInstance& instance) { return mark_entities(instance); }

VectorIndex build_index(const std::vector<RelationInstance>& train, const Endpoint& embedder,
                        std::size_t batch_size) {
  if (train.empty()) throw Error(Errc::Precondition, "cannot build an index over no instances");
  if (batch_size == 0) throw Error(Errc::InvalidConfig, "batch size must be positive");
  VectorIndex index;
  for (std::size_t begin = 0; begin < train.size(); begin += batch_size) {
    const auto end = std::min(train.size(), begin + batch_size);
    EmbeddingRequest request;
    request.model_id = embedder.model_id;
    for (auto i = begin; i < end; ++i) request.texts.push_back(retrieval_text(train[i]));
    auto response = embedder.backend->embed(request);
    if (response.vectors.size() != request.texts.size()) {
      throw Error(Errc::DimensionMismatch, "embedding backend returned the wrong number of vectors");
    }
    for (auto i = begin; i < end; ++i) index.add(train[i].id, response.vectors[i - begin]);
  }
  return index;
}

}  // namespace relagent
