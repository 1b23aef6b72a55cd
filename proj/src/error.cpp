#include "revrec/error.hpp"

namespace revrec {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kUnknownApp: return "UnknownApp";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kEmptyTextEmbedding: return "EmptyTextEmbedding";
    case ErrorCode::kSidecarUnavailable: return "SidecarUnavailable";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kMissingLabels: return "MissingLabels";
    case ErrorCode::kNoDecidedRecommendations: return "NoDecidedRecommendations";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace revrec
