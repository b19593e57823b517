#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cotforge {

/// Every failure the library reports is one of these. The CLI maps each
/// code onto a documented process exit status.
enum class ErrorCode {
  kInvalidArgument,
  kConfigInvalid,
  kDuplicateId,
  kExhaustedRetries,
  kPermanentRejection,
  kMalformedResponse,
  kFatalEndpoint,
  kEmptySequence,
  kNonFiniteLogprob,
  kIncompleteGrid,
  kMissingRuns,
  kEmptyInput,
  kUnknownId,
  kSchemaMismatch,
  kCorruptLine,
  kCorruptCheckpoint,
  kEmptyFile,
  kInterrupted,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cotforge
