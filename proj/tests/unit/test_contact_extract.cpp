#include "afford/contact_extract.hpp"

#include <algorithm>
#include <vector>

#include "helpers.hpp"

using namespace afford;

namespace {

const std::array<PixelPoint, 3> kTri = {PixelPoint{10, 10}, PixelPoint{50, 10}, PixelPoint{30, 40}};

TrackedPoint track(int id, PixelPoint contact, bool visible = true) {
  return TrackedPoint{id, {contact.u + 100.0, contact.v + 200.0}, contact, visible};
}

// Distance oracle by dense sampling of the three edges plus an inside test by barycentric coordinates.
double brute_triangle_distance(PixelPoint p, const std::array<PixelPoint, 3>& t) {
  const double x = p.u, y = p.v;
  const double det = (t[1].v - t[2].v) * (t[0].u - t[2].u) + (t[2].u - t[1].u) * (t[0].v - t[2].v);
  const double l1 = ((t[1].v - t[2].v) * (x - t[2].u) + (t[2].u - t[1].u) * (y - t[2].v)) / det;
  const double l2 = ((t[2].v - t[0].v) * (x - t[2].u) + (t[0].u - t[2].u) * (y - t[2].v)) / det;
  const double l3 = 1.0 - l1 - l2;
  if (l1 >= 0 && l2 >= 0 && l3 >= 0) return 0.0;
  double best = 1e300;
  for (int e = 0; e < 3; ++e) {
    const PixelPoint a = t[e], b = t[(e + 1) % 3];
    // exact projection onto the segment, checked against vertex distances
    const double dx = b.u - a.u, dy = b.v - a.v;
    double s = ((x - a.u) * dx + (y - a.v) * dy) / (dx * dx + dy * dy);
    s = std::clamp(s, 0.0, 1.0);
    best = std::min(best, std::hypot(x - (a.u + s * dx), y - (a.v + s * dy)));
    best = std::min(best, std::hypot(x - a.u, y - a.v));
  }
  return best;
}

std::vector<PixelPoint> cluster(std::mt19937_64& rng, double cx, double cy, double sigma, int n) {
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<PixelPoint> out;
  for (int i = 0; i < n; ++i) out.push_back({cx + g(rng), cy + g(rng)});
  return out;
}

}  // namespace

TEST_CASE("region test: centroid inside, far point outside") {
  const FingerRegion r{kTri, 5.0};
  const PixelPoint centroid{30.0, 20.0};
  std::vector<TrackedPoint> tr = {track(1, centroid), track(2, {30.0, 150.0})};
  const auto in = points_in_finger_region(tr, r);
  REQUIRE(in.size() == 1);
  CHECK(in[0].u == 130.0);
  CHECK(in[0].v == 220.0);
}

TEST_CASE("region test: dilation boundary is inclusive") {
  const FingerRegion r{kTri, 5.0};
  // bottom edge is v = 10 between u = 10 and u = 50
  std::vector<TrackedPoint> tr = {track(1, {30.0, 5.0}), track(2, {30.0, 4.5})};
  CHECK(point_triangle_distance({30.0, 5.0}, kTri) == 5.0);
  const auto in = points_in_finger_region(tr, r);
  REQUIRE(in.size() == 1);
  CHECK(in[0].v == 205.0);
}

TEST_CASE("region test: invisible tracks, order and degenerate triangles") {
  const FingerRegion r{kTri, 0.0};
  std::vector<TrackedPoint> tr = {track(1, {30, 20}), track(2, {31, 20}, false), track(3, {20, 15}), track(4, {40, 15})};
  const auto in = points_in_finger_region(tr, r);
  REQUIRE(in.size() == 3);
  CHECK(in[0].u == 130.0);
  CHECK(in[1].u == 120.0);
  CHECK(in[2].u == 140.0);
  const FingerRegion bad{{PixelPoint{0, 0}, PixelPoint{1, 1}, PixelPoint{2, 2}}, 5.0};
  CHECK_ERROR_CODE(points_in_finger_region(tr, bad), ErrorCode::kDegenerateRegion);
}

TEST_CASE("point-triangle distance matches a barycentric oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(-50.0, 150.0);
  for (int t = 0; t < 2000; ++t) {
    std::array<PixelPoint, 3> tri = {PixelPoint{U(rng), U(rng)}, PixelPoint{U(rng), U(rng)}, PixelPoint{U(rng), U(rng)}};
    const double area = std::abs((tri[1].u - tri[0].u) * (tri[2].v - tri[0].v) - (tri[2].u - tri[0].u) * (tri[1].v - tri[0].v));
    if (area < 1.0) continue;
    const PixelPoint p{U(rng), U(rng)};
    CHECK(point_triangle_distance(p, tri) == doctest::Approx(brute_triangle_distance(p, tri)).epsilon(1e-9));
  }
}

TEST_CASE("gmm: identical points hit the variance floor") {
  const std::vector<PixelPoint> pts(50, PixelPoint{30.0, 40.0});
  const GmmParams g = fit_gmm(pts, 1, 0);
  CHECK(g.means[0].x() == doctest::Approx(30.0));
  CHECK(g.means[0].y() == doctest::Approx(40.0));
  CHECK(g.variances[0] == kGmmVarianceFloor);
  CHECK(g.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("gmm: two clusters recover their centroids") {
  for (uint64_t trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(100 + trial);
    auto a = cluster(rng, 20, 20, 2.0, 100);
    auto b = cluster(rng, 80, 80, 2.0, 100);
    Eigen::Vector2d ca = Eigen::Vector2d::Zero(), cb = Eigen::Vector2d::Zero();
    for (auto& p : a) ca += Eigen::Vector2d(p.u, p.v);
    for (auto& p : b) cb += Eigen::Vector2d(p.u, p.v);
    ca /= 100.0;
    cb /= 100.0;
    std::vector<PixelPoint> all = a;
    all.insert(all.end(), b.begin(), b.end());
    const GmmParams g = fit_gmm(all, 2, trial);
    const bool order = (g.means[0] - ca).norm() < (g.means[1] - ca).norm();
    CHECK((g.means[order ? 0 : 1] - ca).norm() < 0.5);
    CHECK((g.means[order ? 1 : 0] - cb).norm() < 0.5);
    CHECK(g.weights[0] + g.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gmm: too few points") {
  CHECK_ERROR_CODE(fit_gmm(std::vector<PixelPoint>{{1.0, 1.0}}, 2, 0), ErrorCode::kTooFewPoints);
}

TEST_CASE("gmm: k = 1 equals sample mean and pooled variance") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 50; ++t) {
    const double s = 0.2 + 5.0 * (t % 7);
    const auto pts = cluster(rng, 10.0 * t, -3.0 * t, s, 17 + t);
    double mu = 0, mv = 0;
    for (auto& p : pts) mu += p.u, mv += p.v;
    mu /= pts.size();
    mv /= pts.size();
    double var = 0;
    for (auto& p : pts) var += (p.u - mu) * (p.u - mu) + (p.v - mv) * (p.v - mv);
    var /= 2.0 * pts.size();
    const GmmParams g = fit_gmm(pts, 1, 7);
    CHECK(std::abs(g.means[0].x() - mu) < 1e-9);
    CHECK(std::abs(g.means[0].y() - mv) < 1e-9);
    CHECK(g.variances[0] == doctest::Approx(std::max(var, kGmmVarianceFloor)).epsilon(1e-9));
  }
}

TEST_CASE("gmm: log-likelihood never decreases") {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 100; ++t) {
    std::vector<PixelPoint> pts;
    const int nc = 1 + t % 4;
    for (int c = 0; c < nc; ++c) {
      auto more = cluster(rng, 100.0 * std::uniform_real_distribution<double>()(rng),
                          100.0 * std::uniform_real_distribution<double>()(rng), 1.0 + c, 10 + 7 * c);
      pts.insert(pts.end(), more.begin(), more.end());
    }
    const GmmFit fit = fit_gmm_traced(pts, 1 + t % 3, t);
    REQUIRE(fit.log_likelihood.size() >= 2);
    for (size_t i = 1; i < fit.log_likelihood.size(); ++i) {
      CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9 * std::abs(fit.log_likelihood[i - 1]));
    }
    CHECK(fit.log_likelihood.back() == doctest::Approx(gmm_log_likelihood(pts, fit.params)).epsilon(1e-12));
    for (double v : fit.params.variances) CHECK(v >= kGmmVarianceFloor);
    double wsum = 0;
    for (double w : fit.params.weights) wsum += w;
    CHECK(std::abs(wsum - 1.0) < 1e-9);
  }
}

TEST_CASE("gmm: permutation invariance and translation equivariance") {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 30; ++t) {
    auto pts = cluster(rng, 40, 40, 6.0, 60);
    auto more = cluster(rng, 60, 30, 3.0, 25);
    pts.insert(pts.end(), more.begin(), more.end());
    const GmmParams g = fit_gmm(pts, 3, t);
    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const GmmParams h = fit_gmm(shuffled, 3, t);
    for (int c = 0; c < 3; ++c) {
      CHECK(g.means[c] == h.means[c]);
      CHECK(g.variances[c] == h.variances[c]);
    }
    CHECK(contact_point(g).u == contact_point(h).u);

    const double du = 13.25, dv = -7.5;  // exact in binary, keeps the sort order
    auto moved = pts;
    for (auto& p : moved) p.u += du, p.v += dv;
    const GmmParams m = fit_gmm(moved, 3, t);
    for (int c = 0; c < 3; ++c) {
      CHECK(m.means[c].x() == doctest::Approx(g.means[c].x() + du).epsilon(1e-9));
      CHECK(m.means[c].y() == doctest::Approx(g.means[c].y() + dv).epsilon(1e-9));
      CHECK(m.variances[c] == doctest::Approx(g.variances[c]).epsilon(1e-6));
    }
    CHECK(contact_point(m).u == doctest::Approx(contact_point(g).u + du).epsilon(1e-9));
  }
}

TEST_CASE("contact point is the unweighted mean of means") {
  GmmParams one{1, {Eigen::Vector2d(30, 40)}, {1.0}, {1.0}};
  CHECK(contact_point(one).u == 30.0);
  CHECK(contact_point(one).v == 40.0);
  GmmParams two{2, {Eigen::Vector2d(0, 0), Eigen::Vector2d(10, 10)}, {1.0, 1.0}, {0.9, 0.1}};
  CHECK(contact_point(two).u == 5.0);
  CHECK(contact_point(two).v == 5.0);

  // inside the convex hull of the means: barycentric weights 1/K are all positive
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> U(0.0, 100.0);
  for (int t = 0; t < 100; ++t) {
    GmmParams g{3, {}, {1, 1, 1}, {0.2, 0.3, 0.5}};
    for (int c = 0; c < 3; ++c) g.means.emplace_back(U(rng), U(rng));
    const PixelPoint c = contact_point(g);
    const std::array<PixelPoint, 3> tri = {PixelPoint{g.means[0].x(), g.means[0].y()},
                                           PixelPoint{g.means[1].x(), g.means[1].y()},
                                           PixelPoint{g.means[2].x(), g.means[2].y()}};
    CHECK(point_triangle_distance(c, tri) < 1e-9);
  }
}
