#pragma once

#include <array>
#include <span>

#include "afford/geometry.hpp"

namespace afford {

/// Fixed 21-joint ordering: wrist, then thumb CMC..TIP, then MCP..TIP for index, middle, ring, pinky.
enum class Joint : int {
  kWrist = 0,
  kThumbCmc = 1, kThumbMcp = 2, kThumbIp = 3, kThumbTip = 4,
  kIndexMcp = 5, kIndexPip = 6, kIndexDip = 7, kIndexTip = 8,
  kMiddleMcp = 9, kMiddlePip = 10, kMiddleDip = 11, kMiddleTip = 12,
  kRingMcp = 13, kRingPip = 14, kRingDip = 15, kRingTip = 16,
  kPinkyMcp = 17, kPinkyPip = 18, kPinkyDip = 19, kPinkyTip = 20,
};

inline constexpr int kNumJoints = 21;

struct HandKeypoints {
  std::array<Point3, kNumJoints> joints{};

  const Point3& operator[](Joint j) const { return joints[static_cast<int>(j)]; }
  Point3& operator[](Joint j) { return joints[static_cast<int>(j)]; }

  /// Finite joints and a plausible hand scale (all pairwise distances < 0.5 m).
  void validate() const;
};

enum class FingerPairId { kThumbIndex = 0, kThumbMiddle = 1 };

struct FingerPair {
  FingerPairId pair_id = FingerPairId::kThumbIndex;
  Point3 tip_a = Point3::Zero();  // always the thumb tip
  Point3 tip_b = Point3::Zero();
  double score = 0.0;
};

struct PalmFrame {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Point3 centroid = Point3::Zero();
  double rms_fit_error = 0.0;
};

/// Hand-scale constants of the pair-selection score.
struct GripConfig {
  double sigma_d = 0.05;       // m
  double contact_radius = 0.03;  // m
  double proximity_weight = 1.0;
};

/// Least-squares plane through the wrist and the four finger MCPs, oriented to face the object.
PalmFrame fit_palm_plane(const HandKeypoints& hand, const Point3& object_centroid);

/// Score of one candidate pair: exp(-d_tip / sigma_d) + lambda * fraction of object points near the tip segment.
double finger_pair_score(const Point3& tip_a, const Point3& tip_b, std::span<const Point3> object_points,
                         const GripConfig& cfg = {});

FingerPair select_finger_pair(const HandKeypoints& hand, std::span<const Point3> object_points,
                              const GripConfig& cfg = {});

/// Parallel-gripper frame from the inter-finger vector and palm normal:
/// x = closing axis, z = negated palm normal orthogonalized against x, y = z cross x.
Quaternion recover_contact_pose(const FingerPair& pair, const PalmFrame& palm);

/// Same mapping on raw vectors; `recover_contact_pose` forwards here.
Eigen::Matrix3d gripper_frame(const Eigen::Vector3d& v_fp, const Eigen::Vector3d& n_palm);

}  // namespace afford
