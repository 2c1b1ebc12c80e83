#pragma once

#include <stdexcept>
#include <string>

namespace grainkit {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    MalformedCounts,
    EmptyMask,
    GapInIds,
    EmptyScales,
    NonPositiveScale,
    InvalidPrompt,
    PointInNoGrain,
    BackendUnavailable,
    CacheCorrupt,
    CacheMiss,
    MissingBoundaryMask,
    EmptyGroundTruth,
    EmptyInput,
    LengthMismatch,
    CannotPlace,
    InvalidConfig,
    IoError,
    MissingPrefilterMasks,
    GrainSetMismatch,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the toolkit carries a machine-readable kind so the
/// CLI can map it to an exit code.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what);

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

} // namespace grainkit
