#include "afford/error.hpp"

namespace afford {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kInvalidDepth: return "InvalidDepth";
    case ErrorCode::kNonUnit: return "NonUnit";
    case ErrorCode::kDegenerate: return "Degenerate";
    case ErrorCode::kDegeneratePalm: return "DegeneratePalm";
    case ErrorCode::kAmbiguousOrientation: return "AmbiguousOrientation";
    case ErrorCode::kNoObjectPoints: return "NoObjectPoints";
    case ErrorCode::kDegenerateVfp: return "DegenerateVfp";
    case ErrorCode::kParallelAxes: return "ParallelAxes";
    case ErrorCode::kDegenerateRegion: return "DegenerateRegion";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kBadParams: return "BadParams";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kDegenerateRotation: return "DegenerateRotation";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnknownInstruction: return "UnknownInstruction";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kSpecInfeasible: return "SpecInfeasible";
    case ErrorCode::kCorruptManifest: return "CorruptManifest";
    case ErrorCode::kMissingBlob: return "MissingBlob";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kCurationFailed: return "CurationFailed";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

}  // namespace afford
