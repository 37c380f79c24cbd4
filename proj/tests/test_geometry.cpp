#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <numbers>

#include "wahnerf/error.hpp"
#include "wahnerf/geometry.hpp"

using namespace wah;

TEST_CASE("sphere poses land on the documented positions") {
  Intrinsics in;
  CHECK((pose_from_sphere({2.0, 0.0, std::numbers::pi / 2}, in).position - Vec3(2, 0, 0)).norm() < 1e-12);
  CHECK((pose_from_sphere({1.0, std::numbers::pi / 2, std::numbers::pi / 2}, in).position - Vec3(0, 1, 0)).norm() <
        1e-12);

  const CameraPose cam = pose_from_sphere({4.0, 0.7, 1.1}, in);
  const Vec3 expected(4 * std::sin(1.1) * std::cos(0.7), 4 * std::sin(1.1) * std::sin(0.7), 4 * std::cos(1.1));
  CHECK((cam.position - expected).norm() < 1e-12);
  CHECK((cam.forward() + cam.position.normalized()).norm() < 1e-12);
  CHECK((cam.rotation.transpose() * cam.rotation - Mat3::Identity()).norm() < 1e-9);
  CHECK(cam.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  // Camera up has a non-negative world-z component.
  CHECK(cam.rotation.col(1).z() > 0.0);
}

TEST_CASE("degenerate poses are rejected") {
  Intrinsics in;
  CHECK_THROWS_AS(pose_from_sphere({4.0, 0.0, 0.0}, in), InvalidArgument);
  CHECK_THROWS_AS(pose_from_sphere({4.0, 0.0, std::numbers::pi}, in), InvalidArgument);
  CHECK_THROWS_AS(pose_from_sphere({0.0, 0.0, 1.0}, in), InvalidArgument);
  in.near = 3.0;
  in.far = 2.0;
  CHECK_THROWS_AS(pose_from_sphere({4.0, 0.0, 1.0}, in), InvalidArgument);
}

TEST_CASE("sphere coordinates round-trip through positions") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    SphericalPose s{uniform(rng, 0.5, 8.0), uniform(rng, 0.0, 2 * std::numbers::pi), uniform(rng, 0.05, 3.0)};
    const SphericalPose back = sphere_from_position(pose_from_sphere(s, Intrinsics{}).position);
    CHECK(back.radius == doctest::Approx(s.radius).epsilon(1e-12));
    CHECK(std::abs(back.gamma - s.gamma) < 1e-9);
    const double dphi = std::abs(back.phi - s.phi);
    CHECK(std::min(dphi, 2 * std::numbers::pi - dphi) < 1e-9);
  }
}

TEST_CASE("zero perturbation reproduces the pose") {
  Rng rng(1);
  const SphericalPose s{4.0, 1.0, 0.8};
  const PosePair pair = perturb_pose(s, TauRanges{}, rng, 3);
  REQUIRE(pair.perturbed.size() == 3);
  for (const auto& p : pair.perturbed) {
    CHECK(p.radius == s.radius);
    CHECK(p.phi == s.phi);
    CHECK(p.gamma == s.gamma);
  }
}

TEST_CASE("explicit perturbation shifts each component") {
  const SphericalPose s{4.0, 0.3, 1.0};
  const SphericalPose p = apply_perturbation(s, {0.1, 0.0, 0.0}, TauRanges{});
  CHECK(p.radius == doctest::Approx(4.1));
  CHECK(p.phi == s.phi);
  CHECK(p.gamma == s.gamma);
  const SphericalPose wrapped = apply_perturbation({4.0, 0.01, 1.0}, {0.0, -0.02, 0.0}, TauRanges{});
  CHECK(wrapped.phi == doctest::Approx(2 * std::numbers::pi - 0.01));
  TauRanges r;
  const SphericalPose clamped = apply_perturbation({4.0, 0.0, 0.01}, {0.0, 0.0, -1.0}, r);
  CHECK(clamped.gamma > r.gamma_min);
}

TEST_CASE("perturbation draws stay inside their intervals") {
  Rng rng(99);
  TauRanges r;
  r.radius = 0.02;
  r.phi = 0.02;
  r.gamma = 0.02;
  const SphericalPose s{4.0, 1.0, 1.2};
  const PosePair pair = perturb_pose(s, r, rng, 10000);
  double mean = 0.0;
  for (std::size_t i = 0; i < pair.taus.size(); ++i) {
    const Tau& t = pair.taus[i];
    CHECK(std::abs(t.phi) <= 0.02);
    CHECK(std::abs(t.radius) <= 0.02);
    CHECK(pair.perturbed[i].radius == doctest::Approx(s.radius + t.radius).epsilon(1e-14));
    CHECK(pair.perturbed[i].gamma == doctest::Approx(s.gamma + t.gamma).epsilon(1e-14));
    mean += t.phi;
  }
  mean /= 10000.0;
  const double sd = 0.04 / std::sqrt(12.0) / std::sqrt(10000.0);
  CHECK(std::abs(mean) < 3 * sd);

  // Re-aimed perturbed cameras stay within a small angle of the unseen axis.
  const CameraPose a = pose_from_sphere(s, Intrinsics{});
  for (std::size_t i = 0; i < 100; ++i) {
    const CameraPose b = pose_from_sphere(pair.perturbed[i], Intrinsics{});
    CHECK(std::acos(std::clamp(a.forward().dot(b.forward()), -1.0, 1.0)) <= 0.05);
  }
}

TEST_CASE("perturbation ranges that allow a non-positive radius are rejected") {
  Rng rng(0);
  TauRanges r;
  r.radius = 5.0;
  CHECK_THROWS_AS(perturb_pose({4.0, 0.0, 1.0}, r, rng), InvalidArgument);
  CHECK_THROWS_AS(perturb_pose({4.0, 0.0, 1.0}, TauRanges{}, rng, 0), InvalidArgument);
}

TEST_CASE("pixel cones follow the pinhole model") {
  Intrinsics in;
  in.focal = 100.0;
  in.width = in.height = 64;
  const CameraPose cam = pose_from_sphere({4.0, 0.4, 0.9}, in);
  const ConeRay ray = pixel_cone(cam, 0, 0);
  const Vec3 local(-31.5 / 100.0, 31.5 / 100.0, -1.0);
  const Vec3 expected = (cam.rotation * local).normalized();
  CHECK((ray.direction - expected).norm() < 1e-12);
  CHECK(ray.base_radius == doctest::Approx(2.0 / (100.0 * std::sqrt(12.0))).epsilon(1e-15));
  CHECK(ray.origin == cam.position);

  in.width = in.height = 33;
  const CameraPose odd = pose_from_sphere({4.0, 0.4, 0.9}, in);
  CHECK((pixel_cone(odd, 16, 16).direction - odd.forward()).norm() < 1e-12);

  // Mirrored columns mirror about the camera's vertical plane.
  const ConeRay l = pixel_cone(odd, 5, 3), r = pixel_cone(odd, 5, 29);
  const Vec3 right = odd.rotation.col(0);
  CHECK(l.direction.dot(right) == doctest::Approx(-r.direction.dot(right)).epsilon(1e-12));
  CHECK(l.direction.dot(odd.forward()) == doctest::Approx(r.direction.dot(odd.forward())).epsilon(1e-12));
  CHECK_THROWS_AS(pixel_cone(odd, 33, 0), InvalidArgument);
}

TEST_CASE("unseen poses respect their bounds") {
  Rng rng(17);
  PoseBounds b;
  b.gamma_min = b.gamma_max = 0.7;
  for (int i = 0; i < 1000; ++i) {
    const SphericalPose s = sample_unseen_pose(b, rng);
    CHECK(s.radius == 4.0);
    CHECK(s.gamma == 0.7);
    const Vec3 p = pose_from_sphere(s, Intrinsics{}).position;
    CHECK(std::abs(p.z()) == doctest::Approx(4.0 * std::cos(0.7)).epsilon(1e-12));
    CHECK(std::abs(pixel_cone(pose_from_sphere(s, Intrinsics{}), 3, 7).direction.norm() - 1.0) < 1e-9);
  }
  b.phi_min = b.phi_max = 1.25;
  const SphericalPose exact = sample_unseen_pose(b, rng);
  CHECK(exact.phi == 1.25);
  b.gamma_min = 1.0;
  b.gamma_max = 0.5;
  CHECK_THROWS_AS(sample_unseen_pose(b, rng), InvalidArgument);
}
