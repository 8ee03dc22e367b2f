#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relagent {

enum class Errc {
  // validation
  OffsetOutOfBounds,
  OverlappingEntities,
  UnknownGoldLabel,
  InvalidLabelSet,
  InvalidConfig,
  // backend
  Precondition,
  AuthError,
  RateLimited,
  TransportError,
  ScriptExhausted,
  // prompting / parsing
  UnboundSlot,
  NoLabelFound,
  AmbiguousLabel,
  MalformedExampleBlock,
  UnroutableResponse,
  InvalidPartition,
  EmptyPool,
  // retrieval
  DimensionMismatch,
  InvalidIndexFile,
  // data
  MissingFile,
  SchemaError,
  UnknownLabel,
  NotEnoughTraining,
  // evaluation / reporting
  IdMismatch,
  MissingReport,
};

std::string_view errc_name(Errc code);

/// Backend failures that a run treats as "backend exhaustion" (CLI exit code 3).
bool is_backend_error(Errc code);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

}  // namespace relagent
