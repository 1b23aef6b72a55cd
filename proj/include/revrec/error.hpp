#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace revrec {

enum class ErrorCode {
  kUnknownApp,
  kIo,
  kSchemaViolation,
  kVersionMismatch,
  kEmptyTextEmbedding,
  kSidecarUnavailable,
  kDimensionMismatch,
  kZeroVector,
  kEmptyCorpus,
  kEmptySet,
  kMissingLabels,
  kNoDecidedRecommendations,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries one of the codes above so the
// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace revrec
