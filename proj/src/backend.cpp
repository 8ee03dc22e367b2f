#include "relagent/backend.hpp"

#include <cctype>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "relagent/error.hpp"
#include "relagent/util.hpp"

namespace relagent {

namespace {

std::string rstrip(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string request_text(const ChatRequest& request) {
  std::string text;
  for (const auto& m : request.messages) {
    text += m.content;
    text += '\n';
  }
  return text;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(ChatRole r) {
  switch (r) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
  }
  return "user";
}

ChatRole parse_chat_role(std::string_view name) {
  if (name == "system") return ChatRole::system;
  if (name == "user") return ChatRole::user;
  if (name == "assistant") return ChatRole::assistant;
  throw Error(Errc::Precondition, fmt::format("unknown chat role '{}'", name));
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(Errc::Precondition, "chat request has no messages");
  if (messages.front().role == ChatRole::assistant) {
    throw Error(Errc::Precondition, "first message must be a system or user message");
  }
  if (!(temperature >= 0.0)) throw Error(Errc::Precondition, "temperature must be >= 0");
}

void to_json(json& j, const ChatMessage& m) {
  j = json{{"role", to_string(m.role)}, {"content", m.content}};
}

void from_json(const json& j, ChatMessage& m) {
  m.role = parse_chat_role(j.at("role").get<std::string>());
  j.at("content").get_to(m.content);
}

void to_json(json& j, const ChatRequest& r) {
  j = json{{"model_id", r.model_id},
           {"messages", r.messages},
           {"temperature", r.temperature},
           {"max_output_tokens", r.max_output_tokens ? json(*r.max_output_tokens) : json(nullptr)}};
}

void to_json(json& j, const ChatResponse& r) {
  j = json{{"content", r.content},
           {"model_id", r.model_id},
           {"token_usage", {{"prompt", r.usage.prompt}, {"completion", r.usage.completion}}},
           {"latency_ms", r.latency.count()},
           {"from_cache", r.from_cache}};
}

void from_json(const json& j, ChatResponse& r) {
  j.at("content").get_to(r.content);
  j.at("model_id").get_to(r.model_id);
  const auto& usage = j.at("token_usage");
  r.usage.prompt = usage.value("prompt", 0L);
  r.usage.completion = usage.value("completion", 0L);
  r.latency = std::chrono::milliseconds(j.value("latency_ms", 0L));
  r.from_cache = j.value("from_cache", false);
}

std::string request_digest(const ChatRequest& request) {
  json canonical = request;
  canonical["kind"] = "chat";
  return sha256_hex(canonical.dump());
}

std::string embedding_digest(const EmbeddingRequest& request) {
  json canonical{{"kind", "embed"}, {"model_id", request.model_id}, {"texts", request.texts}};
  return sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<std::string> script) {
  for (auto& s : script) queue_.push_back({std::move(s), std::nullopt});
}

void ScriptedBackend::push(std::string content, std::optional<std::string> match) {
  std::lock_guard lock(mutex_);
  queue_.push_back({std::move(content), std::move(match)});
}

void ScriptedBackend::add_rule(std::string match, std::string content) {
  std::lock_guard lock(mutex_);
  rules_.push_back({std::move(content), std::move(match)});
}

void ScriptedBackend::set_embedding(std::string text, std::vector<float> vector) {
  std::lock_guard lock(mutex_);
  embeddings_[std::move(text)] = std::move(vector);
}

void ScriptedBackend::set_hashed_embeddings(std::size_t dimension) {
  std::lock_guard lock(mutex_);
  hashed_dim_ = dimension;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  request.validate();
  const auto text = request_text(request);
  std::lock_guard lock(mutex_);
  auto fits = [&](const Entry& e) { return !e.match || text.find(*e.match) != std::string::npos; };
  std::optional<std::string> content;
  for (auto it = queue_.begin(); it != queue_.end(); ++it) {
    if (fits(*it)) {
      content = std::move(it->content);
      queue_.erase(it);
      break;
    }
  }
  if (!content) {
    for (const auto& rule : rules_) {
      if (fits(rule)) {
        content = rule.content;
        break;
      }
    }
  }
  if (!content) {
    throw Error(Errc::ScriptExhausted,
                fmt::format("no scripted reply left for model '{}'", request.model_id));
  }
  ChatResponse response;
  response.content = rstrip(std::move(*content));
  response.model_id = request.model_id;
  return response;
}

EmbeddingResponse ScriptedBackend::embed(const EmbeddingRequest& request) {
  if (request.texts.empty()) throw Error(Errc::Precondition, "embedding request has no texts");
  std::lock_guard lock(mutex_);
  EmbeddingResponse response;
  response.model_id = request.model_id;
  for (const auto& text : request.texts) {
    if (auto it = embeddings_.find(text); it != embeddings_.end()) {
      response.vectors.push_back(it->second);
    } else if (hashed_dim_ > 0) {
      response.vectors.push_back(hashed_embedding(text, hashed_dim_));
    } else {
      throw Error(Errc::ScriptExhausted, fmt::format("no scripted embedding for '{}'", text));
    }
  }
  return response;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& spec) {
  auto backend = std::make_shared<ScriptedBackend>();
  for (const auto& item : spec.value("script", json::array())) {
    if (item.is_string()) {
      backend->push(item.get<std::string>());
    } else {
      std::optional<std::string> match;
      if (item.contains("match")) match = item.at("match").get<std::string>();
      backend->push(item.at("content").get<std::string>(), match);
    }
  }
  for (const auto& rule : spec.value("rules", json::array())) {
    backend->add_rule(rule.value("match", std::string()), rule.at("content").get<std::string>());
  }
  for (const auto& [text, vec] : spec.value("embeddings", json::object()).items()) {
    backend->set_embedding(text, vec.get<std::vector<float>>());
  }
  backend->set_hashed_embeddings(spec.value("hashed_embedding_dim", std::size_t{0}));
  return backend;
}

std::vector<float> hashed_embedding(std::string_view text, std::size_t dimension) {
  std::vector<float> v(dimension, 0.0f);
  if (dimension == 0) return v;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const auto h = fnv1a(token);
    v[h % dimension] += (h >> 63) ? -1.0f : 1.0f;
    token.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  if (norm == 0.0) {
    v[0] = 1.0f;
    return v;
  }
  const auto inv = 1.0 / std::sqrt(norm);
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

// ---------------------------------------------------------------------------
// CountingBackend

ChatResponse CountingBackend::complete(const ChatRequest& request) {
  ++chat_calls_;
  return inner_->complete(request);
}

EmbeddingResponse CountingBackend::embed(const EmbeddingRequest& request) {
  ++embed_calls_;
  return inner_->embed(request);
}

// ---------------------------------------------------------------------------
// CachingBackend

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
  if (!directory_.empty()) std::filesystem::create_directories(directory_);
}

std::optional<json> CachingBackend::lookup(const std::string& digest) {
  std::lock_guard lock(mutex_);
  if (auto it = memory_.find(digest); it != memory_.end()) return it->second;
  if (directory_.empty()) return std::nullopt;
  const auto path = directory_ / (digest + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto body = json::parse(read_file(path), nullptr, false);
  if (body.is_discarded()) return std::nullopt;
  memory_[digest] = body;
  return body;
}

void CachingBackend::store(const std::string& digest, const json& body) {
  std::lock_guard lock(mutex_);
  memory_[digest] = body;
  if (!directory_.empty()) write_file_atomic(directory_ / (digest + ".json"), body.dump());
}

ChatResponse CachingBackend::complete(const ChatRequest& request) {
  request.validate();
  const auto digest = request_digest(request);
  if (auto cached = lookup(digest)) {
    ++hits_;
    auto response = cached->get<ChatResponse>();
    response.from_cache = true;
    return response;
  }
  ++misses_;
  auto response = inner_->complete(request);
  response.from_cache = false;
  store(digest, json(response));
  return response;
}

EmbeddingResponse CachingBackend::embed(const EmbeddingRequest& request) {
  if (request.texts.empty()) throw Error(Errc::Precondition, "embedding request has no texts");
  const auto digest = embedding_digest(request);
  if (auto cached = lookup(digest)) {
    ++hits_;
    EmbeddingResponse response;
    response.model_id = cached->at("model_id").get<std::string>();
    response.vectors = cached->at("vectors").get<std::vector<std::vector<float>>>();
    return response;
  }
  ++misses_;
  auto response = inner_->embed(request);
  store(digest, json{{"model_id", response.model_id}, {"vectors", response.vectors}});
  return response;
}

// ---------------------------------------------------------------------------
// Rate limiting

TokenBucket::TokenBucket(double requests_per_minute, double burst,
                         std::function<Clock::time_point()> now,
                         std::function<void(Clock::duration)> sleep)
    : rate_per_second_(requests_per_minute / 60.0),
      burst_(burst),
      tokens_(burst),
      now_(std::move(now)),
      sleep_(std::move(sleep)) {
  if (!(requests_per_minute > 0.0) || !(burst >= 1.0)) {
    throw Error(Errc::InvalidConfig, "rate limiter needs a positive rate and burst >= 1");
  }
  if (!sleep_) sleep_ = [](Clock::duration d) { std::this_thread::sleep_for(d); };
  last_ = now_();
}

std::optional<TokenBucket::Clock::duration> TokenBucket::try_acquire(Clock::time_point now) {
  std::lock_guard lock(mutex_);
  if (now > last_) {
    const std::chrono::duration<double> elapsed = now - last_;
    tokens_ = std::min(burst_, tokens_ + elapsed.count() * rate_per_second_);
    last_ = now;
  }
  if (tokens_ >= 1.0) {
    tokens_ -= 1.0;
    return std::nullopt;
  }
  const std::chrono::duration<double> wait((1.0 - tokens_) / rate_per_second_);
  return std::chrono::duration_cast<Clock::duration>(wait) + Clock::duration(1);
}

void TokenBucket::acquire() {
  while (auto wait = try_acquire(now_())) sleep_(*wait);
}

ChatResponse RateLimitedBackend::complete(const ChatRequest& request) {
  bucket_->acquire();
  return inner_->complete(request);
}

EmbeddingResponse RateLimitedBackend::embed(const EmbeddingRequest& request) {
  bucket_->acquire();
  return inner_->embed(request);
}

}  // namespace relagent
