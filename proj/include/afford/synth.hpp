#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afford/geometry.hpp"
#include "afford/grip_mapping.hpp"
#include "afford/record.hpp"

namespace afford {

struct GeneratorConfig {
  int width = 64;
  int height = 64;
  std::vector<Archetype> archetypes = {Archetype::kBoxWithHandle, Archetype::kMug, Archetype::kDrawerFront,
                                       Archetype::kBlock};
  double scale_min = 0.20;  // object scale as a fraction of the image width
  double scale_max = 0.28;
  double yaw_range_deg = 45.0;  // yaw uniform in [-range, range]
  int max_clutter = 3;
  double track_noise_px = 0.0;
  double track_shift_px = 2.0;   // max global shift between pre-contact and contact frame
  double track_dropout = 0.03;   // fraction of tracks invisible in the contact frame
  double region_dilation_px = 5.0;  // px at 256 px width, scaled with the image
  double twin_probability = 0.0;  // chance of an identical, unmasked copy of the target
  double grip_width_m = 0.03;
  Provenance provenance = Provenance::kSynthetic;

  void validate() const;
};

/// Fully determines one record.
struct SceneSpec {
  uint64_t seed = 0;
  int width = 64;
  int height = 64;
  Archetype archetype = Archetype::kBlock;
  PixelPoint center;   // px
  double yaw = 0.0;    // rad
  double scale = 16.0;  // px per object unit
  int instruction_id = static_cast<int>(Instruction::kPickUpBlock);
  CameraIntrinsics intrinsics;
  int clutter_count = 0;
  bool twin = false;
  double track_noise_px = 0.0;
  double track_shift_px = 2.0;
  double track_dropout = 0.03;
  double region_dilation_px = 5.0;
  double grip_width_m = 0.03;
  Provenance provenance = Provenance::kSynthetic;

  void validate() const;
};

/// Instruction templates available for an archetype.
std::vector<int> instructions_for(Archetype a);

/// Default camera: f = 0.9 W, principal point at the image center.
CameraIntrinsics default_intrinsics(int width, int height);

SceneSpec random_scene_spec(uint64_t seed, const GeneratorConfig& cfg);

/// Renders the scene and its demonstration. Throws SpecInfeasible when clutter or a twin cannot be
/// placed clear of the target within 20 attempts.
SampleRecord generate_sample(const SceneSpec& spec);

/// Records 0..count-1 with ids `<prefix><index>`. Infeasible specs are redrawn from the next sub-seed,
/// so the output depends only on (cfg, count, seed).
std::vector<SampleRecord> generate_dataset(const GeneratorConfig& cfg, int count, uint64_t seed,
                                           const std::string& id_prefix = "rec_");

struct CurationOptions {
  int max_components = 3;
  int object_point_stride = 2;
  GripConfig grip;
};

/// Curation pipeline: palm plane, finger pair and gripper frame for the orientation; tracked points in the
/// fingertip region and a GMM for the contact point. Attaches the result as the record's label.
/// Throws CurationFailed (with the record id) when intermediates are missing or a stage fails.
PoseCenteredAffordance curate(SampleRecord& record, const CurationOptions& opts = {});

}  // namespace afford
