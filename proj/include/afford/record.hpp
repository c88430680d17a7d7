#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afford/contact_extract.hpp"
#include "afford/geometry.hpp"
#include "afford/grip_mapping.hpp"
#include "afford/image.hpp"

namespace afford {

enum class Archetype { kBoxWithHandle = 0, kMug = 1, kDrawerFront = 2, kBlock = 3 };
inline constexpr int kNumArchetypes = 4;

/// Closed instruction vocabulary; the id indexes the model's instruction embedding table.
enum class Instruction {
  kGraspHandle = 0,
  kPullDrawerOpen = 1,
  kPushDrawerClosed = 2,
  kPickUpBlock = 3,
  kPushBlock = 4,
  kGraspMugBody = 5,
  kPushBox = 6,
};
inline constexpr int kNumInstructions = 7;

std::string_view instruction_text(int instruction_id);
std::string_view archetype_name(Archetype a);
Archetype archetype_from_name(std::string_view name);

enum class Provenance { kSynthetic = 0, kHumanCurated = 1, kRobot = 2 };
std::string_view provenance_name(Provenance p);
Provenance provenance_from_name(std::string_view name);

/// Demonstration-side data the curation pipeline consumes.
struct CurationInputs {
  HandKeypoints hand;
  std::vector<TrackedPoint> tracks;
  FingerRegion region;
};

struct SampleRecord {
  std::string id;
  CameraIntrinsics intrinsics;
  RgbdFrame frame;
  Mask mask;
  int instruction_id = 0;
  PoseCenteredAffordance gt;
  Provenance provenance = Provenance::kSynthetic;
  std::optional<CurationInputs> intermediates;
  std::optional<PoseCenteredAffordance> curated;

  int width() const { return frame.width; }
  int height() const { return frame.height; }

  /// Training target: the curated label when present, otherwise the ground truth.
  const PoseCenteredAffordance& label() const { return curated ? *curated : gt; }

  /// Sizes agree, gt contact inside the mask with valid depth, unit gt quaternion.
  void validate() const;
};

/// Camera-frame points of every mask pixel with valid depth, sampled on a stride grid.
std::vector<Point3> object_points(const SampleRecord& r, int stride = 1);

}  // namespace afford
