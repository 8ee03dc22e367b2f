#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relagent/types.hpp"

namespace relagent {

enum class ChatRole { system, user, assistant };

std::string_view to_string(ChatRole r);
ChatRole parse_chat_role(std::string_view name);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<int> max_output_tokens;

  /// Throws Precondition when messages are empty, the first message is an
  /// assistant turn, or the temperature is negative.
  void validate() const;

  bool operator==(const ChatRequest&) const = default;
};

struct TokenUsage {
  long prompt = 0;
  long completion = 0;

  bool operator==(const TokenUsage&) const = default;
};

struct ChatResponse {
  std::string content;
  std::string model_id;
  TokenUsage usage;
  std::chrono::milliseconds latency{0};
  bool from_cache = false;
};

struct EmbeddingRequest {
  std::string model_id;
  std::vector<std::string> texts;
};

struct EmbeddingResponse {
  std::string model_id;
  std::vector<std::vector<float>> vectors;
};

/// One model provider. Implementations must tolerate concurrent calls.
class Backend {
public:
  virtual ~Backend() = default;

  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual EmbeddingResponse embed(const EmbeddingRequest& request) = 0;
};

/// Hex SHA-256 over the canonical JSON of (model_id, messages, temperature,
/// max_output_tokens).
std::string request_digest(const ChatRequest& request);
std::string embedding_digest(const EmbeddingRequest& request);

/// Deterministic replay double.
///
/// Queued entries are consumed in order, the first whose matcher (a substring
/// of the concatenated request text) fits; entries without a matcher fit any
/// request. Persistent rules are consulted when no queued entry fits and are
/// never consumed, which keeps them deterministic under concurrent callers.
/// Running out of both is ScriptExhausted.
class ScriptedBackend : public Backend {
public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> script);

  void push(std::string content, std::optional<std::string> match = std::nullopt);
  void add_rule(std::string match, std::string content);
  void set_embedding(std::string text, std::vector<float> vector);
  /// Texts missing from the embedding table get a hashed bag-of-words vector
  /// of this dimension instead of an error.
  void set_hashed_embeddings(std::size_t dimension);

  std::size_t remaining() const;

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingResponse embed(const EmbeddingRequest& request) override;

  /// {"script": [str | {"content", "match"}], "rules": [{"match", "content"}],
  ///  "embeddings": {text: [floats]}, "hashed_embedding_dim": n}
  static std::shared_ptr<ScriptedBackend> from_json(const json& spec);

private:
  struct Entry {
    std::string content;
    std::optional<std::string> match;
  };

  mutable std::mutex mutex_;
  std::deque<Entry> queue_;
  std::vector<Entry> rules_;
  std::unordered_map<std::string, std::vector<float>> embeddings_;
  std::size_t hashed_dim_ = 0;
};

/// Feature-hashed, L2-normalized bag of lowercase word tokens.
std::vector<float> hashed_embedding(std::string_view text, std::size_t dimension);

/// Counts calls that reach the wrapped backend.
class CountingBackend : public Backend {
public:
  explicit CountingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingResponse embed(const EmbeddingRequest& request) override;

  std::size_t chat_calls() const { return chat_calls_.load(); }
  std::size_t embed_calls() const { return embed_calls_.load(); }

private:
  std::shared_ptr<Backend> inner_;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

/// Content-addressed response cache: one `<digest>.json` file per request
/// under `directory` (memory-only when the directory is empty).
class CachingBackend : public Backend {
public:
  CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path directory);

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingResponse embed(const EmbeddingRequest& request) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

private:
  std::optional<json> lookup(const std::string& digest);
  void store(const std::string& digest, const json& body);

  std::shared_ptr<Backend> inner_;
  std::filesystem::path directory_;
  std::mutex mutex_;
  std::map<std::string, json> memory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Token bucket over requests. `acquire` blocks until a token is available.
class TokenBucket {
public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(double requests_per_minute, double burst,
              std::function<Clock::time_point()> now = [] { return Clock::now(); },
              std::function<void(Clock::duration)> sleep = nullptr);

  void acquire();
  /// Takes a token if one is available at `now`; otherwise returns how long
  /// to wait.
  std::optional<Clock::duration> try_acquire(Clock::time_point now);

private:
  double rate_per_second_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::function<Clock::time_point()> now_;
  std::function<void(Clock::duration)> sleep_;
  std::mutex mutex_;
};

class RateLimitedBackend : public Backend {
public:
  RateLimitedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<TokenBucket> bucket)
      : inner_(std::move(inner)), bucket_(std::move(bucket)) {}

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingResponse embed(const EmbeddingRequest& request) override;

private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<TokenBucket> bucket_;
};

/// A backend bound to the model id one agent role uses.
struct Endpoint {
  std::shared_ptr<Backend> backend;
  std::string model_id;
};

void to_json(json& j, const ChatMessage& m);
void from_json(const json& j, ChatMessage& m);
void to_json(json& j, const ChatRequest& r);
void to_json(json& j, const ChatResponse& r);
void from_json(const json& j, ChatResponse& r);

}  // namespace relagent
