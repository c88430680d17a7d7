#include "afford/geometry.hpp"

#include "helpers.hpp"

using namespace afford;

namespace {

CameraIntrinsics cam128() { return CameraIntrinsics{100.0, 100.0, 64.0, 64.0, 256, 128}; }

DepthMap const_depth(int w, int h, float z) { return DepthMap(w, h, z); }

}  // namespace

TEST_CASE("unproject at the principal point") {
  const Point3 p = unproject(cam128(), {64.0, 64.0}, const_depth(256, 128, 2.0f));
  CHECK(p.x() == doctest::Approx(0.0));
  CHECK(p.y() == doctest::Approx(0.0));
  CHECK(p.z() == doctest::Approx(2.0));
}

TEST_CASE("unproject off-axis substitution") {
  const Point3 p = unproject(cam128(), {164.0, 64.0}, const_depth(256, 128, 2.0f));
  CHECK(p.x() == doctest::Approx(2.0));
  CHECK(p.y() == doctest::Approx(0.0));
  CHECK(p.z() == doctest::Approx(2.0));
}

TEST_CASE("unproject samples the nearest pixel") {
  DepthMap d = const_depth(8, 8, 1.0f);
  d.at(3, 2) = 3.0f;
  const CameraIntrinsics k{10.0, 10.0, 4.0, 4.0, 8, 8};
  CHECK(unproject(k, {3.4, 1.6}, d).z() == doctest::Approx(3.0));
  CHECK(unproject(k, {3.6, 1.6}, d).z() == doctest::Approx(1.0));
}

TEST_CASE("unproject errors") {
  DepthMap d = const_depth(8, 8, 1.0f);
  d.at(2, 2) = 0.0f;
  const CameraIntrinsics k{10.0, 10.0, 4.0, 4.0, 8, 8};
  CHECK_ERROR_CODE(unproject(k, {-1.0, 2.0}, d), ErrorCode::kOutOfBounds);
  CHECK_ERROR_CODE(unproject(k, {2.0, 8.0}, d), ErrorCode::kOutOfBounds);
  CHECK_ERROR_CODE(unproject(k, {2.2, 1.9}, d), ErrorCode::kInvalidDepth);
}

TEST_CASE("project inverts unproject") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int w = 32 + static_cast<int>(U(rng) * 300), h = 32 + static_cast<int>(U(rng) * 300);
    const CameraIntrinsics k{50 + 500 * U(rng), 50 + 500 * U(rng), U(rng) * (w - 1), U(rng) * (h - 1), w, h};
    const PixelPoint c{static_cast<double>(static_cast<int>(U(rng) * (w - 1))),
                       static_cast<double>(static_cast<int>(U(rng) * (h - 1)))};
    const DepthMap d = const_depth(w, h, static_cast<float>(0.1 + 50 * U(rng)));
    const Point3 p = unproject(k, c, d);
    // forward pinhole model written out
    const double u = k.fx * p.x() / p.z() + k.cx;
    const double v = k.fy * p.y() / p.z() + k.cy;
    CHECK(std::abs(u - c.u) < 1e-6);
    CHECK(std::abs(v - c.v) < 1e-6);
    const PixelPoint back = project(k, p);
    CHECK(std::abs(back.u - c.u) < 1e-6);
    CHECK(std::abs(back.v - c.v) < 1e-6);
  }
}

TEST_CASE("quat_to_rot6d closed forms") {
  Rot6D r = quat_to_rot6d(Quaternion{1, 0, 0, 0});
  CHECK((r.a1 - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((r.a2 - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  const double h = std::sqrt(0.5);
  r = quat_to_rot6d(Quaternion{h, 0, 0, h});
  CHECK((r.a1 - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  CHECK((r.a2 - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
  CHECK_ERROR_CODE(quat_to_rot6d(Quaternion{1.001, 0, 0, 0}), ErrorCode::kNonUnit);
}

TEST_CASE("rot6d_to_quat closed forms") {
  Quaternion q = rot6d_to_quat({Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)});
  CHECK(q.w == doctest::Approx(1.0));
  q = rot6d_to_quat({Eigen::Vector3d(2, 0, 0), Eigen::Vector3d(1, 1, 0)});
  CHECK(q.w == doctest::Approx(1.0));
  CHECK(std::abs(q.x) + std::abs(q.y) + std::abs(q.z) < 1e-12);
  CHECK_ERROR_CODE(rot6d_to_quat({Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(1e-9, 0, 0)}), ErrorCode::kDegenerate);
  CHECK_ERROR_CODE(rot6d_to_quat({Eigen::Vector3d(1e-9, 0, 0), Eigen::Vector3d(0, 1, 0)}), ErrorCode::kDegenerate);
}

TEST_CASE("rotation round trip through 6D") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const Quaternion q = testutil::random_quat(rng);
    const Rot6D r = quat_to_rot6d(q);
    // oracle: columns of the Eigen rotation matrix
    const Eigen::Matrix3d m = q.to_eigen().toRotationMatrix();
    CHECK((r.a1 - m.col(0)).norm() < 1e-12);
    CHECK((r.a2 - m.col(1)).norm() < 1e-12);
    const Quaternion back = rot6d_to_quat(r);
    const double dot = std::abs(back.w * q.w + back.x * q.x + back.y * q.y + back.z * q.z);
    CHECK(dot > 1.0 - 1e-12);
    CHECK(back.w >= 0.0);
    CHECK(geodesic_angle(back, q) < 1e-5);
  }
}

TEST_CASE("Gram-Schmidt output is orthonormal") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int t = 0; t < 500; ++t) {
    const Rot6D r{Eigen::Vector3d(n(rng), n(rng), n(rng)), Eigen::Vector3d(n(rng), n(rng), n(rng))};
    const Eigen::Matrix3d b = rot6d_to_matrix(r);
    CHECK((b.transpose() * b - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(b.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((b.col(0) - r.a1.normalized()).norm() < 1e-9);
  }
}

TEST_CASE("6D representation is continuous across the quaternion sign flip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(1e-4, 0.0099);
  for (int t = 0; t < 1000; ++t) {
    const Quaternion q = testutil::random_quat(rng);
    const Eigen::Vector3d axis = testutil::random_quat(rng).to_eigen().vec().normalized();
    const double delta = U(rng);
    const Quaternion q2 = Quaternion::from_eigen(q.to_eigen() * Eigen::Quaterniond(Eigen::AngleAxisd(delta, axis)));
    const double d = geodesic_angle(q, q2);
    CHECK(d == doctest::Approx(delta).epsilon(1e-6));
    const Rot6D a = quat_to_rot6d(q), b = quat_to_rot6d(q2);
    Eigen::Matrix<double, 6, 1> va, vb;
    va << a.a1, a.a2;
    vb << b.a1, b.a2;
    CHECK((va - vb).norm() <= 4.0 * d);
  }
  // raw quaternions jump across w = 0 under canonicalization; 6D does not
  const Quaternion near_a = Quaternion::from_eigen(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI - 1e-3, Eigen::Vector3d::UnitZ())));
  const Quaternion near_b = Quaternion::from_eigen(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI + 1e-3, Eigen::Vector3d::UnitZ())));
  Eigen::Vector4d qa(near_a.w, near_a.x, near_a.y, near_a.z), qb(near_b.w, near_b.x, near_b.y, near_b.z);
  CHECK((qa - qb).norm() > 1.0);
  const Rot6D ra = quat_to_rot6d(near_a), rb = quat_to_rot6d(near_b);
  CHECK((ra.a1 - rb.a1).norm() + (ra.a2 - rb.a2).norm() < 8e-3);
}

TEST_CASE("quaternion canonical form and matrix conversion") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const Quaternion q = testutil::random_quat(rng);
    CHECK(q.w >= 0.0);
    CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const Quaternion neg{-q.w, -q.x, -q.y, -q.z};
    const Quaternion c = neg.canonical();
    CHECK(std::abs(c.w - q.w) + std::abs(c.x - q.x) + std::abs(c.y - q.y) + std::abs(c.z - q.z) < 1e-15);
    const Quaternion m = Quaternion::from_matrix(q.to_matrix());
    CHECK(geodesic_angle(m, q) < 1e-7);
  }
}

TEST_CASE("assemble_pose composes unprojection and orientation") {
  const PoseCenteredAffordance a{{64.0, 64.0}, Quaternion::identity()};
  const Pose6DoF p = assemble_pose(cam128(), a, const_depth(256, 128, 2.0f));
  CHECK((p.position - Point3(0, 0, 2.0)).norm() < 1e-12);
  CHECK(p.orientation.w == 1.0);

  DepthMap holes = const_depth(256, 128, 2.0f);
  holes.at(64, 64) = 0.0f;
  CHECK_ERROR_CODE(assemble_pose(cam128(), a, holes), ErrorCode::kInvalidDepth);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  DepthMap d(256, 128);
  for (auto& v : d.values) v = static_cast<float>(0.2 + 5 * U(rng));
  for (int t = 0; t < 1000; ++t) {
    const PoseCenteredAffordance r{{U(rng) * 255.0, U(rng) * 127.0}, testutil::random_quat(rng)};
    const Pose6DoF pose = assemble_pose(cam128(), r, d);
    CHECK((pose.position - unproject(cam128(), r.contact_point, d)).norm() == 0.0);
    CHECK(pose.orientation.w == r.orientation.w);
    CHECK(pose.orientation.x == r.orientation.x);
    CHECK(pose.orientation.y == r.orientation.y);
    CHECK(pose.orientation.z == r.orientation.z);
  }
}

TEST_CASE("intrinsics and depth validation") {
  CHECK_NOTHROW(cam128().validate());
  CameraIntrinsics bad = cam128();
  bad.fx = 0.0;
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::kInvalidArgument);
  bad = cam128();
  bad.cx = 256.0;
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::kInvalidArgument);
  DepthMap d = const_depth(4, 4, 1.0f);
  d.at(1, 1) = 150.0f;
  CHECK_ERROR_CODE(d.validate(), ErrorCode::kInvalidArgument);
  d = const_depth(4, 4, 1.0f);
  d.values.pop_back();
  CHECK_ERROR_CODE(d.validate(), ErrorCode::kInvalidArgument);
}
