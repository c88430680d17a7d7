#include "afford/record.hpp"

#include <array>
#include <cmath>

#include "afford/error.hpp"

namespace afford {

namespace {

constexpr std::array<std::string_view, kNumInstructions> kInstructionText = {
    "grasp the handle", "pull the drawer open", "push the drawer closed", "pick up the block",
    "push the block",   "grasp the mug body",   "push the box",
};

constexpr std::array<std::string_view, kNumArchetypes> kArchetypeNames = {"box_with_handle", "mug", "drawer_front",
                                                                          "block"};

constexpr std::array<std::string_view, 3> kProvenanceNames = {"synthetic", "human_curated", "robot"};

}  // namespace

std::string_view instruction_text(int instruction_id) {
  if (instruction_id < 0 || instruction_id >= kNumInstructions) {
    fail(ErrorCode::kUnknownInstruction, "instruction id " + std::to_string(instruction_id));
  }
  return kInstructionText[instruction_id];
}

std::string_view archetype_name(Archetype a) { return kArchetypeNames.at(static_cast<int>(a)); }

Archetype archetype_from_name(std::string_view name) {
  for (int i = 0; i < kNumArchetypes; ++i) {
    if (kArchetypeNames[i] == name) return static_cast<Archetype>(i);
  }
  fail(ErrorCode::kInvalidArgument, "unknown archetype '" + std::string(name) + "'");
}

std::string_view provenance_name(Provenance p) { return kProvenanceNames.at(static_cast<int>(p)); }

Provenance provenance_from_name(std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    if (kProvenanceNames[i] == name) return static_cast<Provenance>(i);
  }
  fail(ErrorCode::kInvalidArgument, "unknown provenance '" + std::string(name) + "'");
}

void SampleRecord::validate() const {
  frame.validate();
  intrinsics.validate();
  if (mask.width != frame.width || mask.height != frame.height ||
      mask.values.size() != static_cast<size_t>(frame.width) * frame.height) {
    fail(ErrorCode::kSizeMismatch, "record " + id + ": mask and frame sizes differ");
  }
  if (intrinsics.width != frame.width || intrinsics.height != frame.height) {
    fail(ErrorCode::kSizeMismatch, "record " + id + ": intrinsics and frame sizes differ");
  }
  if (instruction_id < 0 || instruction_id >= kNumInstructions) {
    fail(ErrorCode::kUnknownInstruction, "record " + id + ": instruction id " + std::to_string(instruction_id));
  }
  const PixelPoint c = gt.contact_point;
  if (!c.in_image(frame.width, frame.height) || !mask.at(c.col(), c.row())) {
    fail(ErrorCode::kInvalidArgument, "record " + id + ": gt contact point outside the mask");
  }
  if (!frame.depth.valid(c.col(), c.row())) fail(ErrorCode::kInvalidDepth, "record " + id + ": no depth at gt contact");
  if (std::abs(gt.orientation.norm() - 1.0) > 1e-6) fail(ErrorCode::kNonUnit, "record " + id + ": gt quaternion");
  if (intermediates) intermediates->hand.validate();
}

std::vector<Point3> object_points(const SampleRecord& r, int stride) {
  if (stride < 1) fail(ErrorCode::kInvalidArgument, "stride must be positive");
  std::vector<Point3> out;
  for (int row = 0; row < r.height(); row += stride) {
    for (int col = 0; col < r.width(); col += stride) {
      if (!r.mask.at(col, row) || !r.frame.depth.valid(col, row)) continue;
      out.push_back(backproject_at_depth(r.intrinsics, {static_cast<double>(col), static_cast<double>(row)},
                                         r.frame.depth.at(col, row)));
    }
  }
  return out;
}

}  // namespace afford
