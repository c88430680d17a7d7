#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "afford/image.hpp"

namespace afford {

/// Camera-frame point in meters: +z forward, +x right, +y down.
using Point3 = Eigen::Vector3d;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
};

/// Continuous pixel coordinates: u is the column, v the row.
struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  /// Nearest integer pixel.
  int col() const;
  int row() const;
  bool in_image(int width, int height) const;
};

/// Scalar-first unit quaternion kept in canonical form (w >= 0).
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_matrix(const Eigen::Matrix3d& rotation);
  static Quaternion from_eigen(const Eigen::Quaterniond& q) { return Quaternion{q.w(), q.x(), q.y(), q.z()}.canonical(); }

  double norm() const;
  Quaternion normalized() const;
  Quaternion canonical() const;
  Eigen::Matrix3d to_matrix() const;
  Eigen::Quaterniond to_eigen() const { return Eigen::Quaterniond(w, x, y, z); }
};

/// First two columns of a rotation matrix, possibly unnormalized.
struct Rot6D {
  Eigen::Vector3d a1 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d a2 = Eigen::Vector3d::UnitY();
};

struct Pose6DoF {
  Point3 position = Point3::Zero();
  Quaternion orientation;
};

/// a = {c, R}: pixel contact point and contact orientation in the camera frame.
struct PoseCenteredAffordance {
  PixelPoint contact_point;
  Quaternion orientation;
};

/// Back-projects `c` with the depth sampled at its nearest pixel.
/// Throws OutOfBounds when c is outside the image, InvalidDepth when the sample is not valid.
Point3 unproject(const CameraIntrinsics& k, PixelPoint c, const DepthMap& depth);

/// Pinhole projection; z must be positive.
PixelPoint project(const CameraIntrinsics& k, const Point3& p);

/// Ray point at a given depth without sampling a depth map.
Point3 backproject_at_depth(const CameraIntrinsics& k, PixelPoint c, double z);

Rot6D quat_to_rot6d(const Quaternion& q);

/// Gram-Schmidt reconstruction; throws Degenerate when a1 or the orthogonal part of a2 vanishes.
Quaternion rot6d_to_quat(const Rot6D& r);

/// Orthonormal [b1 b2 b3] produced by the same Gram-Schmidt path as rot6d_to_quat.
Eigen::Matrix3d rot6d_to_matrix(const Rot6D& r);

Pose6DoF assemble_pose(const CameraIntrinsics& k, const PoseCenteredAffordance& a, const DepthMap& depth);

/// Geodesic angle between two rotations, in [0, pi].
double geodesic_angle(const Quaternion& a, const Quaternion& b);

}  // namespace afford
