#pragma once

#include <stdexcept>
#include <string>

namespace scmoa {

enum class ErrorCode {
  kParseError,
  kDuplicateId,
  kIdMismatch,
  kKindMismatch,
  kEmptyInput,
  kLengthMismatch,
  kDegenerateMargin,
  kNoScoreableProposals,
  kNoPublicPassers,
  kExecutorFailure,
  kBackendUnavailable,
  kMissingFixture,
  kGeneratorMalformedOutput,
  kConfigError,
  kIoError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scmoa
