#include "cadsketch/error.hpp"

namespace cadsketch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroExtent: return "ZeroExtent";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::TooManyPrimitives: return "TooManyPrimitives";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::IndivisibleDims: return "IndivisibleDims";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::RejectionOverflow: return "RejectionOverflow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::TapeConsumed: return "TapeConsumed";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace cadsketch
