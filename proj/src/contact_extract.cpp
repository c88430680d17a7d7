#include "afford/contact_extract.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "afford/error.hpp"

namespace afford {

namespace {

using Vec2 = Eigen::Vector2d;

Vec2 as_vec(PixelPoint p) { return {p.u, p.v}; }

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// E-step: fills `log_resp` (n x k, row-major) with normalized log responsibilities and returns the
/// total log-likelihood.
double expectation(std::span<const Vec2> pts, const GmmParams& g, std::vector<double>& log_resp) {
  const size_t n = pts.size();
  const int k = g.k;
  log_resp.assign(n * k, 0.0);
  std::vector<double> comp_const(k);
  for (int c = 0; c < k; ++c) {
    comp_const[c] = (g.weights[c] > 0.0 ? std::log(g.weights[c]) : -std::numeric_limits<double>::infinity()) -
                    std::log(2.0 * std::numbers::pi * g.variances[c]);
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double* row = &log_resp[i * k];
    for (int c = 0; c < k; ++c) {
      row[c] = comp_const[c] - (pts[i] - g.means[c]).squaredNorm() / (2.0 * g.variances[c]);
    }
    const double lse = log_sum_exp(std::span<const double>(row, k));
    for (int c = 0; c < k; ++c) row[c] -= lse;
    total += lse;
  }
  return total;
}

void maximization(std::span<const Vec2> pts, const std::vector<double>& log_resp, GmmParams& g) {
  const size_t n = pts.size();
  const int k = g.k;
  for (int c = 0; c < k; ++c) {
    double nk = 0.0;
    Vec2 sum = Vec2::Zero();
    for (size_t i = 0; i < n; ++i) {
      const double r = std::exp(log_resp[i * k + c]);
      nk += r;
      sum += r * pts[i];
    }
    g.weights[c] = nk / static_cast<double>(n);
    if (nk < 1e-300) continue;  // starved component keeps its location and spread
    const Vec2 mean = sum / nk;
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) sq += std::exp(log_resp[i * k + c]) * (pts[i] - mean).squaredNorm();
    g.means[c] = mean;
    g.variances[c] = std::max(sq / (2.0 * nk), kGmmVarianceFloor);
  }
}

GmmParams seed_components(std::span<const Vec2> pts, int k, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const Vec2 dir(std::cos(angle), std::sin(angle));

  // First center: extreme point along a seeded direction. Later centers: farthest from those chosen.
  // Both rules only depend on the point set, so input order does not matter.
  std::vector<size_t> chosen;
  size_t first = 0;
  for (size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].dot(dir) > pts[first].dot(dir)) first = i;
  }
  chosen.push_back(first);
  std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < k) {
    const Vec2& last = pts[chosen.back()];
    size_t best = 0;
    double best_d = -1.0;
    for (size_t i = 0; i < pts.size(); ++i) {
      nearest[i] = std::min(nearest[i], (pts[i] - last).squaredNorm());
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    chosen.push_back(best);
  }

  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double var = 0.0;
  for (const auto& p : pts) var += (p - mean).squaredNorm();
  var = std::max(var / (2.0 * static_cast<double>(pts.size())), kGmmVarianceFloor);

  GmmParams g;
  g.k = k;
  for (size_t idx : chosen) g.means.push_back(pts[idx]);
  g.variances.assign(k, var);
  g.weights.assign(k, 1.0 / k);
  return g;
}

}  // namespace

double point_triangle_distance(PixelPoint p, const std::array<PixelPoint, 3>& tri) {
  const Vec2 q = as_vec(p);
  const Vec2 a = as_vec(tri[0]);
  const Vec2 b = as_vec(tri[1]);
  const Vec2 c = as_vec(tri[2]);
  const double d1 = cross2(b - a, q - a);
  const double d2 = cross2(c - b, q - b);
  const double d3 = cross2(a - c, q - c);
  const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
  if (!(has_neg && has_pos)) return 0.0;
  return std::min({point_segment_distance(q, a, b), point_segment_distance(q, b, c), point_segment_distance(q, c, a)});
}

std::vector<PixelPoint> points_in_finger_region(std::span<const TrackedPoint> tracks, const FingerRegion& region) {
  const auto& v = region.vertices;
  const double area2 = std::abs(cross2(as_vec(v[1]) - as_vec(v[0]), as_vec(v[2]) - as_vec(v[0])));
  if (!(0.5 * area2 > 1e-6)) fail(ErrorCode::kDegenerateRegion, "fingertip triangle is degenerate");
  if (!(region.dilation >= 0.0)) fail(ErrorCode::kInvalidArgument, "negative region dilation");

  std::vector<PixelPoint> out;
  for (const auto& t : tracks) {
    if (!t.visible_contact) continue;
    if (point_triangle_distance(t.pos_contact, v) <= region.dilation) out.push_back(t.pos_pre);
  }
  return out;
}

double gmm_log_likelihood(std::span<const PixelPoint> points, const GmmParams& gmm) {
  std::vector<Vec2> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.push_back(as_vec(p));
  std::vector<double> scratch;
  return expectation(pts, gmm, scratch);
}

GmmFit fit_gmm_traced(std::span<const PixelPoint> points, int k, uint64_t seed) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "component count must be at least 1");
  if (points.size() < static_cast<size_t>(k)) fail(ErrorCode::kTooFewPoints, "fewer points than components");

  // Canonical order makes every floating-point reduction independent of input order.
  std::vector<Vec2> pts;
  pts.reserve(points.size());
  for (const auto& p : points) {
    if (!std::isfinite(p.u) || !std::isfinite(p.v)) fail(ErrorCode::kInvalidArgument, "non-finite point");
    pts.push_back(as_vec(p));
  }
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });

  constexpr int kMaxIterations = 200;
  constexpr double kTolerancePerPoint = 1e-8;
  const double n = static_cast<double>(pts.size());

  GmmFit fit;
  fit.params = seed_components(pts, k, seed);
  std::vector<double> log_resp;
  double ll = expectation(pts, fit.params, log_resp);
  fit.log_likelihood.push_back(ll);
  for (int it = 1; it <= kMaxIterations; ++it) {
    maximization(pts, log_resp, fit.params);
    const double next = expectation(pts, fit.params, log_resp);
    fit.log_likelihood.push_back(next);
    fit.iterations = it;
    const bool converged = (next - ll) / n < kTolerancePerPoint;
    ll = next;
    if (converged) break;
  }
  return fit;
}

GmmParams fit_gmm(std::span<const PixelPoint> points, int k, uint64_t seed) {
  return fit_gmm_traced(points, k, seed).params;
}

PixelPoint contact_point(const GmmParams& gmm) {
  if (gmm.k < 1 || gmm.means.size() != static_cast<size_t>(gmm.k)) {
    fail(ErrorCode::kInvalidArgument, "GMM has no components");
  }
  Vec2 sum = Vec2::Zero();
  for (const auto& m : gmm.means) sum += m;
  sum /= static_cast<double>(gmm.k);
  return {sum.x(), sum.y()};
}

}  // namespace afford
