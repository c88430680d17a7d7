#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace afford {

enum class ErrorCode {
  kInvalidArgument,
  // geometry
  kOutOfBounds,
  kInvalidDepth,
  kNonUnit,
  kDegenerate,
  // grip mapping
  kDegeneratePalm,
  kAmbiguousOrientation,
  kNoObjectPoints,
  kDegenerateVfp,
  kParallelAxes,
  // contact extraction
  kDegenerateRegion,
  kTooFewPoints,
  // diffusion
  kBadParams,
  kStepOutOfRange,
  kDegenerateRotation,
  // denoiser
  kDimensionMismatch,
  kUnknownInstruction,
  kEmptyBatch,
  kNonFiniteLoss,
  kIoError,
  kVersionMismatch,
  kShapeMismatch,
  // data
  kSpecInfeasible,
  kCorruptManifest,
  kMissingBlob,
  kSizeMismatch,
  kCurationFailed,
  // eval
  kEmptyMask,
  // config
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (tests, the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace afford
