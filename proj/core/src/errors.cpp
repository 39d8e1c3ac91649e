#include "ileumnet/errors.hpp"

namespace ileumnet {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kMirrorTooWide: return "MirrorTooWide";
    case ErrorCode::kInvalidRate: return "InvalidRate";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kWindowTooSmall: return "WindowTooSmall";
    case ErrorCode::kWeightOutOfRange: return "WeightOutOfRange";
    case ErrorCode::kSeedBelowThreshold: return "SeedBelowThreshold";
    case ErrorCode::kCentroidOutOfBounds: return "CentroidOutOfBounds";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kMissingCentroid: return "MissingCentroid";
    case ErrorCode::kMissingDistribution: return "MissingDistribution";
    case ErrorCode::kWindowLargerThanVolume: return "WindowLargerThanVolume";
    case ErrorCode::kClassTooSmall: return "ClassTooSmall";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kAttentionDisabled: return "AttentionDisabled";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace ileumnet
