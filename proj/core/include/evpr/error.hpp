#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evpr {

enum class ErrorCode {
  // event_io
  MalformedLine,
  CoordinateOutOfRange,
  NonMonotoneTimestamp,
  BadMagic,
  TruncatedRecord,
  VersionUnsupported,
  // representations
  NonPositiveTau,
  // features
  ProviderFailure,
  ShapeMismatch,
  NonFiniteInput,
  ZeroVector,
  BadArchiveHeader,
  MissingFrameId,
  // retrieval
  DimensionMismatch,
  QueryOutOfRange,
  // rerank
  MissingKeypoints,
  MissingDepth,
  // evaluation
  MissingPosition,
  IoFailure,
  // pipeline
  ManifestMismatch,
  MissingArtifact,
  ConfigError,
  InvalidArgument,
};

/// Coarse grouping used for process exit codes.
enum class ErrorCategory { Config, Data, Provider };

std::string_view to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

/// Exception carried by every failing operation in the engine. `context` holds
/// the line number, record index or frame id the failure refers to, when any.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::optional<uint64_t> context = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::optional<uint64_t>& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::optional<uint64_t> context_;
};

}  // namespace evpr
