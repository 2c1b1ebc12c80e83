#include "grainkit/error.hpp"

namespace grainkit {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::MalformedCounts: return "malformed-counts";
    case ErrorKind::EmptyMask: return "empty-mask";
    case ErrorKind::GapInIds: return "gap-in-ids";
    case ErrorKind::EmptyScales: return "empty-scales";
    case ErrorKind::NonPositiveScale: return "non-positive-scale";
    case ErrorKind::InvalidPrompt: return "invalid-prompt";
    case ErrorKind::PointInNoGrain: return "point-in-no-grain";
    case ErrorKind::BackendUnavailable: return "backend-unavailable";
    case ErrorKind::CacheCorrupt: return "cache-corrupt";
    case ErrorKind::CacheMiss: return "cache-miss";
    case ErrorKind::MissingBoundaryMask: return "missing-boundary-mask";
    case ErrorKind::EmptyGroundTruth: return "empty-ground-truth";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::CannotPlace: return "cannot-place";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::IoError: return "io-error";
    case ErrorKind::MissingPrefilterMasks: return "missing-prefilter-masks";
    case ErrorKind::GrainSetMismatch: return "grain-set-mismatch";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

} // namespace grainkit
