#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vulndet {

enum class ErrorCode {
  // vocab
  EmptyCorpus,
  IdOutOfRange,
  // nn-core / optim
  InputTooShort,
  ShapeMismatch,
  BatchTooSmall,
  NotNormalized,
  NonFiniteLoss,
  // smote
  NotEnoughPoints,
  DimensionMismatch,
  // dataset
  MalformedLine,
  NoVulnerableSamples,
  TooFewSamples,
  // models
  IncompatibleSpec,
  LengthMismatch,
  DivergenceDetected,
  VersionMismatch,
  ChecksumMismatch,
  SpecCorrupt,
  // metrics
  IndexOutOfRange,
  EmptyMatrix,
  // cli / io
  VocabHashMismatch,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vulndet
