#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "afford/geometry.hpp"

namespace afford {

/// One object point tracked from the pre-contact frame to the contact frame.
struct TrackedPoint {
  int32_t id = 0;
  PixelPoint pos_pre;
  PixelPoint pos_contact;
  bool visible_contact = true;
};

/// Thumb, index and middle fingertips projected into the contact frame.
struct FingerRegion {
  std::array<PixelPoint, 3> vertices{};
  double dilation = 5.0;  // px
};

/// Isotropic 2D Gaussian mixture in pixel space.
struct GmmParams {
  int k = 0;
  std::vector<Eigen::Vector2d> means;
  std::vector<double> variances;  // px^2
  std::vector<double> weights;
};

struct GmmFit {
  GmmParams params;
  std::vector<double> log_likelihood;  // one entry per evaluated parameter set, starting at the seed
  int iterations = 0;
};

inline constexpr double kGmmVarianceFloor = 0.25;  // px^2

/// Distance from p to the closed triangle (0 inside).
double point_triangle_distance(PixelPoint p, const std::array<PixelPoint, 3>& tri);

/// pos_pre of every visible track whose contact-frame position falls inside the dilated fingertip triangle.
std::vector<PixelPoint> points_in_finger_region(std::span<const TrackedPoint> tracks, const FingerRegion& region);

/// EM with farthest-point seeding. Deterministic in (multiset of points, k, seed).
GmmFit fit_gmm_traced(std::span<const PixelPoint> points, int k, uint64_t seed);
GmmParams fit_gmm(std::span<const PixelPoint> points, int k, uint64_t seed);

/// Total log-likelihood of `points` under `gmm`.
double gmm_log_likelihood(std::span<const PixelPoint> points, const GmmParams& gmm);

/// Unweighted mean of the component means.
PixelPoint contact_point(const GmmParams& gmm);

}  // namespace afford
