#pragma once

// Helpers shared by the engine implementations; not part of the public API.

#include <functional>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "relagent/backend.hpp"
#include "relagent/error.hpp"
#include "relagent/prompting.hpp"
#include "relagent/types.hpp"

namespace relagent::detail {

inline std::string summarize_request(const ChatRequest& request) {
  const auto& last = request.messages.back().content;
  return fmt::format("{} [{}] {}", request.model_id, request_digest(request).substr(0, 16), last);
}

/// Result of asking an agent for a parseable answer.
template <typename T>
struct Asked {
  std::optional<T> value;
  std::string error;
};

/// Sends `request`, parses the reply with `parse`, and on a parse failure
/// re-asks once with the failed reply and `correction` appended. Every call
/// is recorded as a turn. Backend errors propagate.
template <typename T>
Asked<T> ask_with_reask(const Endpoint& endpoint, ChatRequest request,
                        const std::function<T(const std::string&)>& parse,
                        const std::function<std::string(const T&)>& describe, Transcript& transcript,
                        AgentRole role, int cycle, const std::string& correction) {
  Asked<T> out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto response = endpoint.backend->complete(request);
    TranscriptTurn turn{role, summarize_request(request), response.content, {}, cycle};
    try {
      T value = parse(response.content);
      turn.parsed_outcome = describe(value);
      transcript.append(std::move(turn));
      out.value = std::move(value);
      out.error.clear();
      return out;
    } catch (const Error& e) {
      if (is_backend_error(e.code())) throw;
      out.error = e.what();
      turn.parsed_outcome = fmt::format("parse_error: {}", e.what());
      transcript.append(std::move(turn));
    }
    request.messages.push_back({ChatRole::assistant, response.content});
    request.messages.push_back({ChatRole::user, correction});
  }
  return out;
}

inline std::string label_correction(const std::vector<std::string>& labels) {
  return fmt::format(
      "Your reply did not name exactly one permissible label. Reply with one label from this list "
      "alone on the first line:\n{}",
      render_label_list(labels));
}

inline EngineResult error_result(Transcript transcript, Architecture arch, std::string error,
                                 int attempts) {
  transcript.finish(Termination::error, std::nullopt);
  Prediction p;
  p.instance_id = transcript.instance_id();
  p.error = std::move(error);
  p.architecture = arch;
  p.attempts_used = attempts;
  p.transcript_ref = transcript.instance_id();
  return {std::move(p), std::move(transcript)};
}

inline EngineResult label_result(Transcript transcript, Architecture arch, std::string label,
                                 Termination how, int attempts) {
  transcript.finish(how, label);
  Prediction p;
  p.instance_id = transcript.instance_id();
  p.predicted_label = std::move(label);
  p.architecture = arch;
  p.attempts_used = attempts;
  p.transcript_ref = transcript.instance_id();
  return {std::move(p), std::move(transcript)};
}

}  // namespace relagent::detail
