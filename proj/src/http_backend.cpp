#include "relagent/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "relagent/error.hpp"

namespace relagent {

std::chrono::milliseconds RetryPolicy::delay_for(int retry, std::mt19937_64& rng) const {
  const double base = static_cast<double>(initial_delay.count()) * std::pow(factor, retry);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 - jitter * unit(rng);
  return std::chrono::milliseconds(static_cast<long>(std::llround(base * scale)));
}

OpenAiCompatibleBackend::OpenAiCompatibleBackend(HttpBackendOptions options)
    : options_(std::move(options)), rng_(options_.jitter_seed) {
  auto url = options_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidConfig, fmt::format("base_url '{}' has no scheme", options_.base_url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

json OpenAiCompatibleBackend::chat_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json body{{"model", request.model_id}, {"messages", messages}, {"temperature", request.temperature}};
  if (request.max_output_tokens) body["max_tokens"] = *request.max_output_tokens;
  return body;
}

ChatResponse OpenAiCompatibleBackend::parse_chat_body(const json& body) {
  const auto choices = body.find("choices");
  if (choices == body.end() || !choices->is_array() || choices->empty()) {
    throw Error(Errc::TransportError, "response has no choices");
  }
  const auto& message = (*choices)[0].value("message", json::object());
  const auto content = message.find("content");
  if (content == message.end() || !content->is_string()) {
    throw Error(Errc::TransportError, "response choice has no message content");
  }
  ChatResponse response;
  response.content = content->get<std::string>();
  while (!response.content.empty() && std::isspace(static_cast<unsigned char>(response.content.back()))) {
    response.content.pop_back();
  }
  response.model_id = body.value("model", std::string());
  if (auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
    response.usage.prompt = usage->value("prompt_tokens", 0L);
    response.usage.completion = usage->value("completion_tokens", 0L);
  }
  return response;
}

json OpenAiCompatibleBackend::embedding_body(const EmbeddingRequest& request) {
  return json{{"model", request.model_id}, {"input", request.texts}};
}

EmbeddingResponse OpenAiCompatibleBackend::parse_embedding_body(const json& body,
                                                                 std::size_t expected) {
  const auto data = body.find("data");
  if (data == body.end() || !data->is_array() || data->size() != expected) {
    throw Error(Errc::TransportError,
                fmt::format("embedding response must carry {} vectors", expected));
  }
  EmbeddingResponse response;
  response.model_id = body.value("model", std::string());
  response.vectors.resize(expected);
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    const auto index = item.value("index", i);
    if (index >= expected) throw Error(Errc::TransportError, "embedding index out of range");
    response.vectors[index] = item.at("embedding").get<std::vector<float>>();
  }
  return response;
}

json OpenAiCompatibleBackend::post_with_retry(const std::string& path, const json& body) {
  if (options_.api_key.empty()) throw Error(Errc::AuthError, "no API credential configured");
  const auto payload = body.dump();
  const httplib::Headers headers{{"Authorization", "Bearer " + options_.api_key}};
  std::string last_failure;
  bool last_was_rate_limit = false;

  for (int attempt = 0; attempt <= options_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      std::chrono::milliseconds delay;
      {
        std::lock_guard lock(rng_mutex_);
        delay = options_.retry.delay_for(attempt - 1, rng_);
      }
      spdlog::warn("retrying {} in {} ms ({})", path, delay.count(), last_failure);
      options_.sleep(delay);
    }

    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto result = client.Post(path_prefix_ + path, headers, payload, "application/json");
    if (!result) {
      last_failure = fmt::format("transport: {}", httplib::to_string(result.error()));
      last_was_rate_limit = false;
      continue;
    }
    const int status = result->status;
    if (status == 401 || status == 403) {
      throw Error(Errc::AuthError, fmt::format("HTTP {} from {}", status, path));
    }
    if (status == 429 || status >= 500) {
      last_failure = fmt::format("HTTP {}", status);
      last_was_rate_limit = status == 429;
      continue;
    }
    if (status < 200 || status >= 300) {
      throw Error(Errc::TransportError,
                  fmt::format("HTTP {} from {}: {}", status, path, result->body.substr(0, 200)));
    }
    auto parsed = json::parse(result->body, nullptr, false);
    if (parsed.is_discarded()) throw Error(Errc::TransportError, "response body is not JSON");
    return parsed;
  }
  throw Error(last_was_rate_limit ? Errc::RateLimited : Errc::TransportError,
              fmt::format("{} failed after {} retries: {}", path, options_.retry.max_retries,
                          last_failure));
}

ChatResponse OpenAiCompatibleBackend::complete(const ChatRequest& request) {
  request.validate();
  const auto started = std::chrono::steady_clock::now();
  auto response = parse_chat_body(post_with_retry("/chat/completions", chat_body(request)));
  if (response.model_id.empty()) response.model_id = request.model_id;
  response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  return response;
}

EmbeddingResponse OpenAiCompatibleBackend::embed(const EmbeddingRequest& request) {
  if (request.texts.empty()) throw Error(Errc::Precondition, "embedding request has no texts");
  auto response =
      parse_embedding_body(post_with_retry("/embeddings", embedding_body(request)), request.texts.size());
  if (response.model_id.empty()) response.model_id = request.model_id;
  return response;
}

}  // namespace relagent
