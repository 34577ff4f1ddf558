#include "evpr/error.hpp"

namespace evpr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::NonMonotoneTimestamp: return "NonMonotoneTimestamp";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::NonPositiveTau: return "NonPositiveTau";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::BadArchiveHeader: return "BadArchiveHeader";
    case ErrorCode::MissingFrameId: return "MissingFrameId";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::QueryOutOfRange: return "QueryOutOfRange";
    case ErrorCode::MissingKeypoints: return "MissingKeypoints";
    case ErrorCode::MissingDepth: return "MissingDepth";
    case ErrorCode::MissingPosition: return "MissingPosition";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::NonPositiveTau:
    case ErrorCode::ManifestMismatch:
      return ErrorCategory::Config;
    case ErrorCode::ProviderFailure:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::BadArchiveHeader:
    case ErrorCode::MissingFrameId:
      return ErrorCategory::Provider;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, std::string message, std::optional<uint64_t> context)
    : std::runtime_error(std::move(message)), code_(code), context_(context) {}

}  // namespace evpr
