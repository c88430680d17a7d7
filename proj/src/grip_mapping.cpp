#include "afford/grip_mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "afford/error.hpp"

namespace afford {

void HandKeypoints::validate() const {
  for (const auto& j : joints) {
    if (!j.allFinite()) fail(ErrorCode::kInvalidArgument, "hand joint is not finite");
  }
  for (int a = 0; a < kNumJoints; ++a) {
    for (int b = a + 1; b < kNumJoints; ++b) {
      if ((joints[a] - joints[b]).norm() >= 0.5) {
        fail(ErrorCode::kInvalidArgument, "hand joints farther apart than 0.5 m");
      }
    }
  }
}

PalmFrame fit_palm_plane(const HandKeypoints& hand, const Point3& object_centroid) {
  const std::array<Point3, 5> palm = {hand[Joint::kWrist], hand[Joint::kIndexMcp], hand[Joint::kMiddleMcp],
                                      hand[Joint::kRingMcp], hand[Joint::kPinkyMcp]};
  Point3 centroid = Point3::Zero();
  for (const auto& p : palm) centroid += p;
  centroid /= static_cast<double>(palm.size());

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : palm) {
    const Eigen::Vector3d d = p - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
  // Eigenvalues ascending. The middle one is the spread across the best-fit line: a collinear
  // palm has no in-plane second direction.
  const Eigen::Vector3d evals = solver.eigenvalues().cwiseMax(0.0);
  if (std::sqrt(evals(1)) < 1e-6) fail(ErrorCode::kDegeneratePalm, "palm points are collinear");

  Eigen::Vector3d normal = solver.eigenvectors().col(0).normalized();
  const double facing = normal.dot(object_centroid - centroid);
  if (std::abs(facing) < 1e-9) {
    fail(ErrorCode::kAmbiguousOrientation, "object centroid lies in the palm plane");
  }
  if (facing < 0.0) normal = -normal;

  return {normal, centroid, std::sqrt(evals(0) / static_cast<double>(palm.size()))};
}

namespace {

double point_segment_distance(const Point3& p, const Point3& a, const Point3& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

double finger_pair_score(const Point3& tip_a, const Point3& tip_b, std::span<const Point3> object_points,
                         const GripConfig& cfg) {
  if (object_points.empty()) fail(ErrorCode::kNoObjectPoints, "no object points to score finger pairs against");
  size_t near = 0;
  for (const auto& p : object_points) {
    if (point_segment_distance(p, tip_a, tip_b) <= cfg.contact_radius) ++near;
  }
  const double prox = static_cast<double>(near) / static_cast<double>(object_points.size());
  return std::exp(-(tip_b - tip_a).norm() / cfg.sigma_d) + cfg.proximity_weight * prox;
}

FingerPair select_finger_pair(const HandKeypoints& hand, std::span<const Point3> object_points,
                              const GripConfig& cfg) {
  const Point3& thumb = hand[Joint::kThumbTip];
  const FingerPair index{FingerPairId::kThumbIndex, thumb, hand[Joint::kIndexTip],
                         finger_pair_score(thumb, hand[Joint::kIndexTip], object_points, cfg)};
  const FingerPair middle{FingerPairId::kThumbMiddle, thumb, hand[Joint::kMiddleTip],
                          finger_pair_score(thumb, hand[Joint::kMiddleTip], object_points, cfg)};
  if (middle.score - index.score > 1e-9) return middle;
  return index;
}

Eigen::Matrix3d gripper_frame(const Eigen::Vector3d& v_fp, const Eigen::Vector3d& n_palm) {
  const double v_norm = v_fp.norm();
  if (!(v_norm > 1e-6)) fail(ErrorCode::kDegenerateVfp, "finger tips coincide");
  const double n_norm = n_palm.norm();
  if (!(n_norm > 0.0)) fail(ErrorCode::kParallelAxes, "palm normal is zero");

  const Eigen::Vector3d x = v_fp / v_norm;
  const Eigen::Vector3d n = n_palm / n_norm;
  static const double kMinCos = std::cos(5.0 * std::numbers::pi / 180.0);
  if (std::abs(x.dot(n)) >= kMinCos) {
    fail(ErrorCode::kParallelAxes, "inter-finger vector within 5 degrees of the palm normal");
  }
  const Eigen::Vector3d approach = -n;
  const Eigen::Vector3d z = (approach - approach.dot(x) * x).normalized();
  const Eigen::Vector3d y = z.cross(x);

  Eigen::Matrix3d frame;
  frame.col(0) = x;
  frame.col(1) = y;
  frame.col(2) = z;
  return frame;
}

Quaternion recover_contact_pose(const FingerPair& pair, const PalmFrame& palm) {
  return Quaternion::from_matrix(gripper_frame(pair.tip_b - pair.tip_a, palm.normal));
}

}  // namespace afford
