#pragma once

#include <stdexcept>
#include <string>

namespace ileumnet {

enum class ErrorCode {
  kShapeMismatch,
  kMirrorTooWide,
  kInvalidRate,
  kNonFinite,
  kWindowTooSmall,
  kWeightOutOfRange,
  kSeedBelowThreshold,
  kCentroidOutOfBounds,
  kInsufficientSamples,
  kMissingCentroid,
  kMissingDistribution,
  kWindowLargerThanVolume,
  kClassTooSmall,
  kNonFiniteLoss,
  kAttentionDisabled,
  kIo,
  kConfig,
  kInvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ileumnet
