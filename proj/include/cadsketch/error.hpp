#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadsketch {

enum class ErrorCode {
  ZeroExtent,
  OutOfRange,
  TooManyPrimitives,
  MalformedLine,
  UnknownKind,
  IndivisibleDims,
  IoError,
  MalformedHeader,
  RejectionOverflow,
  ShapeMismatch,
  NonScalarLoss,
  TapeConsumed,
  MissingGradient,
  InvalidPermutation,
  BadMagic,
  VersionMismatch,
  NonFinite,
  CheckpointMismatch,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cadsketch
