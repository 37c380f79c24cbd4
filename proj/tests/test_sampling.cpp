#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "support.hpp"
#include "wahnerf/error.hpp"
#include "wahnerf/sampling.hpp"

using namespace wah;

namespace {

// Two-sided KS statistic of samples against the CDF `F`.
template <typename F>
double ks_statistic(std::vector<double> xs, F cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

// Critical value at p = 0.01.
double ks_critical(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

ConeRay make_ray(const Vec3& d, double radius) {
  ConeRay r;
  r.origin = Vec3(0.3, -0.2, 0.5);
  r.direction = d.normalized();
  r.base_radius = radius;
  r.near = 2.0;
  r.far = 6.0;
  return r;
}

}  // namespace

TEST_CASE("stratified edges without jitter") {
  Rng rng(0);
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 4, false, rng);
  CHECK(iv.edges() == std::vector<double>{2, 3, 4, 5, 6});
  const IntervalSet one = stratified_intervals(2.0, 6.0, 1, false, rng);
  CHECK(one.edges() == std::vector<double>{2, 6});
  CHECK_THROWS_AS(stratified_intervals(6.0, 2.0, 4, false, rng), InvalidArgument);
  CHECK_THROWS_AS(stratified_intervals(2.0, 6.0, 0, false, rng), InvalidArgument);

  const IntervalSet shifted = stratified_intervals(2.5, 6.5, 8, false, rng);
  const IntervalSet base = stratified_intervals(2.0, 6.0, 8, false, rng);
  const auto a = shifted.edges(), b = base.edges();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] - b[i] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("jittered edges are uniform within their bins") {
  Rng rng(21);
  const std::size_t n = 10000;
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 4, true, rng, n);
  const auto edges = iv.edges();
  for (std::size_t k = 1; k < 4; ++k) {
    std::vector<double> xs;
    for (std::size_t r = 0; r < n; ++r) xs.push_back(edges[r * 5 + k]);
    const double centre = 2.0 + static_cast<double>(k);
    CHECK(ks_statistic(xs, [&](double x) { return std::clamp(x - (centre - 0.5), 0.0, 1.0); }) < ks_critical(n));
  }
  for (std::size_t r = 0; r < n; ++r) {
    CHECK(edges[r * 5] == 2.0);
    CHECK(edges[r * 5 + 4] == 6.0);
  }
}

TEST_CASE("frustum moments match a Monte Carlo estimate") {
  Rng rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const ConeRay cone = make_ray(Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)), 0.05);
    const double t0 = uniform(rng, 2.0, 4.0), t1 = t0 + uniform(rng, 0.2, 1.0);
    const FrustumMoments m = frustum_gaussian(cone, t0, t1);

    // Orthonormal basis around the axis.
    const Vec3 d = cone.direction;
    const Vec3 u1 = d.unitOrthogonal(), u2 = d.cross(u1);
    const std::size_t N = 1000000;
    Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
    for (std::size_t i = 0; i < N; ++i) {
      // Volume element grows with t^2: invert the cubic CDF.
      const double t = std::cbrt(t0 * t0 * t0 + uniform01(rng) * (t1 * t1 * t1 - t0 * t0 * t0));
      const double rho = cone.base_radius * t * std::sqrt(uniform01(rng));
      const double theta = 2.0 * std::numbers::pi * uniform01(rng);
      const Vec3 p = cone.origin + t * d + rho * (std::cos(theta) * u1 + std::sin(theta) * u2);
      sum += p;
      sq += p.cwiseProduct(p);
    }
    const Vec3 mean = sum / N;
    const Vec3 var = sq / N - mean.cwiseProduct(mean);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(m.mean[a] - mean[a]) <= 0.01 * std::max(std::abs(mean[a]), 0.1));
      CHECK(std::abs(m.cov_diag[a] - var[a]) <= 0.01 * var[a]);
    }
  }
}

TEST_CASE("degenerate frusta") {
  const ConeRay ray = make_ray(Vec3::UnitZ(), 0.0);
  const FrustumMoments thin = frustum_gaussian(ray, 3.0, 3.5);
  CHECK(thin.cov_diag.x() == 0.0);
  CHECK(thin.cov_diag.y() == 0.0);
  CHECK(thin.cov_diag.z() > 0.0);

  const ConeRay cone = make_ray(Vec3(1, 2, 3), 0.01);
  const FrustumMoments tiny = frustum_gaussian(cone, 4.0 - 1e-6, 4.0 + 1e-6);
  CHECK((tiny.mean - (cone.origin + 4.0 * cone.direction)).norm() < 1e-9);
  CHECK_THROWS_AS(frustum_gaussian(cone, 3.0, 3.0), InvalidArgument);
}

TEST_CASE("batched frustum Gaussians agree with the single-frustum form") {
  Rng rng(2);
  std::vector<ConeRay> rays{make_ray(Vec3(1, 0.2, -0.3), 0.004), make_ray(Vec3(-0.5, 1, 0.1), 0.006)};
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 5, true, rng, 2);
  const FrustumGaussian g = frustum_gaussians(rays, iv);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t m = 0; m < 5; ++m) {
      const FrustumMoments f = frustum_gaussian(rays[r], iv.lo.at(r, m), iv.hi.at(r, m));
      for (std::size_t a = 0; a < 3; ++a) {
        CHECK(g.mean.at(r * 5 + m, a) == doctest::Approx(f.mean[a]).epsilon(1e-13));
        CHECK(g.cov_diag.at(r * 5 + m, a) == doctest::Approx(f.cov_diag[a]).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("integrated encoding matches the closed form") {
  const Vec3 mu(0.3, -0.2, 0.9), var(0.01, 0.02, 0.0);
  FrustumGaussian g{DualArray(Shape{1, 3}, {mu.x(), mu.y(), mu.z()}), DualArray(Shape{1, 3}, {var.x(), var.y(), var.z()})};
  const int L = 4;
  const DualArray enc = integrated_encoding(g, L);
  REQUIRE(enc.shape() == Shape{1, 24});
  for (int l = 0; l < L; ++l) {
    for (int a = 0; a < 3; ++a) {
      const double s = std::ldexp(1.0, l);
      const double damp = std::exp(-0.5 * s * s * var[a]);
      CHECK(std::abs(enc[3 * l + a] - std::sin(s * mu[a]) * damp) < 1e-12);
      CHECK(std::abs(enc[3 * L + 3 * l + a] - std::cos(s * mu[a]) * damp) < 1e-12);
    }
  }
  // Larger variance never increases a feature's magnitude.
  FrustumGaussian wide{g.mean, DualArray(Shape{1, 3}, {0.5, 0.6, 0.7})};
  FrustumGaussian huge{g.mean, DualArray(Shape{1, 3}, {1e4, 1e4, 1e4})};
  const DualArray e_wide = integrated_encoding(wide, L), e_huge = integrated_encoding(huge, L);
  for (std::size_t i = 0; i < enc.size(); ++i) {
    if (i % 3 != 2) CHECK(std::abs(e_wide[i]) <= std::abs(enc[i]) + 1e-15);
    CHECK(std::abs(e_huge[i]) < 1e-12);
    CHECK(std::abs(enc[i]) <= 1.0);
  }
}

TEST_CASE("direction encoding layout") {
  std::vector<ConeRay> rays{make_ray(Vec3(0.6, 0.0, 0.8), 0.01)};
  const DualArray enc = direction_encoding(rays, 3, 2);
  REQUIRE(enc.shape() == Shape{3, direction_encoding_width(2)});
  CHECK(direction_encoding_width(4) == 27);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(enc.at(m, 0) == doctest::Approx(0.6));
    CHECK(enc.at(m, 2) == doctest::Approx(0.8));
    CHECK(enc.at(m, 3 + 3 + 2) == doctest::Approx(std::sin(2.0 * 0.8)));
    CHECK(enc.at(m, 3 + 6 + 0) == doctest::Approx(std::cos(0.6)));
  }
}

TEST_CASE("zero offsets leave intervals bitwise unchanged") {
  Rng rng(4);
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 16, true, rng, 3);
  const ShiftedIntervals s = apply_offsets(iv, DualArray::zeros(Shape{3, 16}), 2.0, 6.0);
  CHECK(std::equal(iv.lo.values().begin(), iv.lo.values().end(), s.intervals.lo.values().begin()));
  CHECK(std::equal(iv.hi.values().begin(), iv.hi.values().end(), s.intervals.hi.values().begin()));
}

TEST_CASE("offsets are clamped to the bounds and re-sorted") {
  Rng rng(4);
  const IntervalSet single = IntervalSet::from_edges(std::vector<double>{2.0, 3.0}, 1, 1);
  const ShiftedIntervals s = apply_offsets(single, DualArray(Shape{1, 1}, {10.0}), 2.0, 6.0);
  CHECK(s.intervals.lo[0] == 5.0);
  CHECK(s.intervals.hi[0] == 6.0);

  const IntervalSet iv = stratified_intervals(2.0, 6.0, 32, true, rng, 4);
  const ShiftedIntervals r = apply_offsets(iv, test::random_array(rng, Shape{4, 32}, -1.5, 1.5), 2.0, 6.0);
  const DualArray mid = r.intervals.midpoints(), width = r.intervals.widths(), w0 = iv.widths();
  for (std::size_t ray = 0; ray < 4; ++ray) {
    for (std::size_t m = 0; m < 32; ++m) {
      CHECK(r.intervals.lo.at(ray, m) >= 2.0);
      CHECK(r.intervals.hi.at(ray, m) <= 6.0);
      CHECK(width.at(ray, m) == doctest::Approx(w0.at(ray, r.order[ray * 32 + m])).epsilon(1e-12));
      if (m > 0) CHECK(mid.at(ray, m - 1) <= mid.at(ray, m));
    }
  }
}

TEST_CASE("shifted geometry is differentiable in the offsets") {
  Rng rng(6);
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 8, true, rng, 2);
  std::vector<ConeRay> rays{make_ray(Vec3(1, 0, 0.2), 0.003), make_ray(Vec3(0, 1, -0.4), 0.003)};
  const DualArray o0 = test::random_array(rng, Shape{2, 8}, -0.05, 0.05);
  auto f = [&](const DualArray& o) {
    const ShiftedIntervals s = apply_offsets(iv, o, 2.0, 6.0);
    const FrustumGaussian g = frustum_gaussians(rays, s.intervals);
    return sum(integrated_encoding(g, 3)) + sum(square(s.intervals.midpoints()));
  };
  CHECK(grad_check(f, o0, 1e-6) < 1e-4);
}

TEST_CASE("resampling follows the padded weight distribution") {
  Rng rng(12);
  const IntervalSet iv = stratified_intervals(2.0, 6.0, 8, false, rng);
  const std::size_t n = 10000;

  SUBCASE("uniform weights give uniform edges") {
    const IntervalSet fine =
        hierarchical_resample(iv, DualArray::full(Shape{1, 8}, 0.3), n - 1, true, rng);
    CHECK(ks_statistic(fine.edges(), [](double x) { return std::clamp((x - 2.0) / 4.0, 0.0, 1.0); }) <
          ks_critical(n));
    CHECK(fine.lo.is_constant());
  }
  SUBCASE("one-hot weights concentrate the samples") {
    std::vector<double> w(8, 0.0);
    w[5] = 1.0;
    const IntervalSet fine = hierarchical_resample(iv, DualArray(Shape{1, 8}, w), n - 1, true, rng);
    const auto e = fine.edges();
    const double inside =
        static_cast<double>(std::count_if(e.begin(), e.end(), [](double x) { return x >= 4.5 && x <= 5.0; }));
    CHECK(inside / static_cast<double>(e.size()) >= 0.9);
  }
  SUBCASE("random weights match the padded CDF") {
    std::vector<double> w = test::uniform_values(rng, 8, 0.0, 1.0);
    const IntervalSet fine = hierarchical_resample(iv, DualArray(Shape{1, 8}, w), n - 1, true, rng);
    double total = 0.0;
    for (double x : w) total += x + kResamplePadding;
    auto cdf = [&](double x) {
      double acc = 0.0;
      for (std::size_t m = 0; m < 8; ++m) {
        const double lo = 2.0 + 0.5 * m;
        const double frac = std::clamp((x - lo) / 0.5, 0.0, 1.0);
        acc += frac * (w[m] + kResamplePadding);
      }
      return acc / total;
    };
    CHECK(ks_statistic(fine.edges(), cdf) < 0.02);
  }
  SUBCASE("all-zero weights fall back to the interval widths") {
    const IntervalSet uneven = IntervalSet::from_edges(std::vector<double>{2.0, 2.5, 6.0}, 1, 2);
    const IntervalSet fine = hierarchical_resample(uneven, DualArray::zeros(Shape{1, 2}), 999, false, rng);
    const auto e = fine.edges();
    const auto below = std::count_if(e.begin(), e.end(), [](double x) { return x < 2.5; });
    CHECK(std::abs(static_cast<double>(below) / 1000.0 - 0.125) < 0.002);
    CHECK(std::is_sorted(e.begin(), e.end()));
  }
  SUBCASE("negative weights are rejected") {
    std::vector<double> w(8, 0.1);
    w[2] = -0.1;
    CHECK_THROWS_AS(hierarchical_resample(iv, DualArray(Shape{1, 8}, w), 16, false, rng), InvalidArgument);
  }
}
