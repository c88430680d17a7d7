#include "afford/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "afford/error.hpp"

namespace afford {

void DepthMap::validate() const {
  if (width <= 0 || height <= 0 || values.size() != static_cast<size_t>(width) * height) {
    fail(ErrorCode::kInvalidArgument, "depth map size does not match its declared dimensions");
  }
  for (float d : values) {
    if (!std::isfinite(d)) fail(ErrorCode::kInvalidArgument, "depth map contains a non-finite value");
    if (d > 0.0f && d >= kMaxDepth) fail(ErrorCode::kInvalidArgument, "depth beyond 100 m");
  }
}

size_t Mask::count() const {
  size_t n = 0;
  for (uint8_t m : values) n += m != 0;
  return n;
}

void RgbdFrame::validate() const {
  if (rgb.size() != static_cast<size_t>(width) * height * 3) {
    fail(ErrorCode::kDimensionMismatch, "rgb buffer does not match frame size");
  }
  if (depth.width != width || depth.height != height) {
    fail(ErrorCode::kDimensionMismatch, "depth size does not match frame size");
  }
  depth.validate();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    fail(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

int PixelPoint::col() const { return static_cast<int>(std::floor(u + 0.5)); }
int PixelPoint::row() const { return static_cast<int>(std::floor(v + 0.5)); }

bool PixelPoint::in_image(int width, int height) const {
  if (!std::isfinite(u) || !std::isfinite(v)) return false;
  const int c = col();
  const int r = row();
  return c >= 0 && r >= 0 && c < width && r < height;
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const {
  if (w < 0.0) return {-w, -x, -y, -z};
  return *this;
}

Eigen::Matrix3d Quaternion::to_matrix() const { return to_eigen().normalized().toRotationMatrix(); }

Quaternion Quaternion::from_matrix(const Eigen::Matrix3d& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return from_eigen(q);
}

Point3 unproject(const CameraIntrinsics& k, PixelPoint c, const DepthMap& depth) {
  if (!c.in_image(depth.width, depth.height)) {
    std::ostringstream msg;
    msg << "pixel (" << c.u << ", " << c.v << ") outside " << depth.width << "x" << depth.height;
    fail(ErrorCode::kOutOfBounds, msg.str());
  }
  const double z = depth.at(c.col(), c.row());
  if (!(z > 0.0)) {
    std::ostringstream msg;
    msg << "no valid depth at pixel (" << c.col() << ", " << c.row() << ")";
    fail(ErrorCode::kInvalidDepth, msg.str());
  }
  return backproject_at_depth(k, c, z);
}

Point3 backproject_at_depth(const CameraIntrinsics& k, PixelPoint c, double z) {
  return {(c.u - k.cx) * z / k.fx, (c.v - k.cy) * z / k.fy, z};
}

PixelPoint project(const CameraIntrinsics& k, const Point3& p) {
  if (!(p.z() > 0.0)) fail(ErrorCode::kInvalidArgument, "cannot project a point behind the camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Rot6D quat_to_rot6d(const Quaternion& q) {
  if (std::abs(q.norm() - 1.0) > 1e-4) fail(ErrorCode::kNonUnit, "quaternion norm deviates from 1");
  const Eigen::Matrix3d m = q.to_matrix();
  return {m.col(0), m.col(1)};
}

Eigen::Matrix3d rot6d_to_matrix(const Rot6D& r) {
  constexpr double kEps = 1e-6;
  const double n1 = r.a1.norm();
  if (!(n1 >= kEps)) fail(ErrorCode::kDegenerate, "first 6D column is near zero");
  const Eigen::Vector3d b1 = r.a1 / n1;
  const Eigen::Vector3d ortho = r.a2 - r.a2.dot(b1) * b1;
  const double n2 = ortho.norm();
  if (!(n2 >= kEps)) fail(ErrorCode::kDegenerate, "6D columns are parallel");
  const Eigen::Vector3d b2 = ortho / n2;
  Eigen::Matrix3d m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Quaternion rot6d_to_quat(const Rot6D& r) { return Quaternion::from_matrix(rot6d_to_matrix(r)); }

Pose6DoF assemble_pose(const CameraIntrinsics& k, const PoseCenteredAffordance& a, const DepthMap& depth) {
  return {unproject(k, a.contact_point, depth), a.orientation};
}

double geodesic_angle(const Quaternion& a, const Quaternion& b) {
  // Angle between the 4-vectors from the chord lengths: accurate near 0 and pi, exactly symmetric,
  // exactly 0 for equal inputs. q and -q are the same rotation, hence the fold.
  const Eigen::Vector4d x(a.w, a.x, a.y, a.z), y(b.w, b.x, b.y, b.z);
  const double half = 2.0 * std::atan2((x - y).norm(), (x + y).norm());
  return 2.0 * std::min(half, std::numbers::pi - half);
}

}  // namespace afford
