#include "relagent/error.hpp"

#include <fmt/format.h>

namespace relagent {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::OffsetOutOfBounds: return "OffsetOutOfBounds";
    case Errc::OverlappingEntities: return "OverlappingEntities";
    case Errc::UnknownGoldLabel: return "UnknownGoldLabel";
    case Errc::InvalidLabelSet: return "InvalidLabelSet";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Precondition: return "Precondition";
    case Errc::AuthError: return "AuthError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::TransportError: return "TransportError";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::UnboundSlot: return "UnboundSlot";
    case Errc::NoLabelFound: return "NoLabelFound";
    case Errc::AmbiguousLabel: return "AmbiguousLabel";
    case Errc::MalformedExampleBlock: return "MalformedExampleBlock";
    case Errc::UnroutableResponse: return "UnroutableResponse";
    case Errc::InvalidPartition: return "InvalidPartition";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidIndexFile: return "InvalidIndexFile";
    case Errc::MissingFile: return "MissingFile";
    case Errc::SchemaError: return "SchemaError";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::NotEnoughTraining: return "NotEnoughTraining";
    case Errc::IdMismatch: return "IdMismatch";
    case Errc::MissingReport: return "MissingReport";
  }
  return "Unknown";
}

bool is_backend_error(Errc code) {
  return code == Errc::AuthError || code == Errc::RateLimited || code == Errc::TransportError ||
         code == Errc::ScriptExhausted;
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", errc_name(code), message)), code_(code) {}

}  // namespace relagent
