#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <random>
#include <string>

#include "relagent/backend.hpp"

namespace relagent {

/// Bounded exponential backoff with jitter. The delay before retry `n`
/// (0-based) is drawn uniformly from
/// [(1 - jitter) * base, base] with base = initial_delay * factor^n.
struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds initial_delay{1000};
  double factor = 2.0;
  double jitter = 0.5;

  std::chrono::milliseconds delay_for(int retry, std::mt19937_64& rng) const;
};

struct HttpBackendOptions {
  /// e.g. "https://api.openai.com/v1"; requests go to {base_url}/chat/completions
  /// and {base_url}/embeddings.
  std::string base_url;
  std::string api_key;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
  std::uint64_t jitter_seed = 0;
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Speaks the OpenAI-compatible chat-completions and embeddings wire format.
class OpenAiCompatibleBackend : public Backend {
public:
  explicit OpenAiCompatibleBackend(HttpBackendOptions options);

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingResponse embed(const EmbeddingRequest& request) override;

  /// Request body for POST {base_url}/chat/completions.
  static json chat_body(const ChatRequest& request);
  /// Extracts choices[0].message.content and usage; throws TransportError on
  /// a body that does not follow the schema.
  static ChatResponse parse_chat_body(const json& body);
  static json embedding_body(const EmbeddingRequest& request);
  static EmbeddingResponse parse_embedding_body(const json& body, std::size_t expected);

private:
  json post_with_retry(const std::string& path, const json& body);

  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

}  // namespace relagent
