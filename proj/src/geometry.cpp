#include "wahnerf/geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

#include "wahnerf/error.hpp"

namespace wah {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w < 0.0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

CameraPose pose_from_sphere(const SphericalPose& s, const Intrinsics& intrinsics) {
  if (!(s.radius > 0.0)) throw InvalidArgument("sphere radius must be positive");
  if (!(s.gamma > 0.0 && s.gamma < std::numbers::pi)) {
    throw InvalidArgument("polar angle " + std::to_string(s.gamma) + " gives a degenerate up vector");
  }
  if (!(intrinsics.near > 0.0 && intrinsics.near < intrinsics.far)) {
    throw InvalidArgument("need 0 < near < far");
  }
  const Vec3 offset(std::sin(s.gamma) * std::cos(s.phi), std::sin(s.gamma) * std::sin(s.phi), std::cos(s.gamma));
  CameraPose cam;
  cam.position = s.target + s.radius * offset;
  cam.intrinsics = intrinsics;

  const Vec3 forward = -offset;
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 up = right.cross(forward);
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = up;
  cam.rotation.col(2) = -forward;
  return cam;
}

SphericalPose sphere_from_position(const Vec3& position, const Vec3& target) {
  const Vec3 d = position - target;
  SphericalPose s;
  s.target = target;
  s.radius = d.norm();
  s.gamma = std::acos(std::clamp(d.z() / s.radius, -1.0, 1.0));
  s.phi = wrap_angle(std::atan2(d.y(), d.x()));
  return s;
}

SphericalPose apply_perturbation(const SphericalPose& s, const Tau& tau, const TauRanges& ranges) {
  SphericalPose p = s;
  p.radius = s.radius + tau.radius;
  if (!(p.radius > 0.0)) throw InvalidArgument("perturbation produces a non-positive radius");
  p.phi = wrap_angle(s.phi + tau.phi);
  const double g = s.gamma + tau.gamma;
  // Open interval: keep a hair away from the bounds themselves.
  const double lo = std::nextafter(ranges.gamma_min, ranges.gamma_max);
  const double hi = std::nextafter(ranges.gamma_max, ranges.gamma_min);
  p.gamma = std::clamp(g, lo, hi);
  return p;
}

PosePair perturb_pose(const SphericalPose& s, const TauRanges& ranges, Rng& rng, std::size_t count) {
  if (count == 0) throw InvalidArgument("need at least one perturbation");
  if (ranges.radius < 0.0 || ranges.phi < 0.0 || ranges.gamma < 0.0) {
    throw InvalidArgument("perturbation half-widths must be non-negative");
  }
  if (!(s.radius - ranges.radius > 0.0)) {
    throw InvalidArgument("radius perturbation range allows a non-positive radius");
  }
  PosePair pair;
  pair.unseen = s;
  for (std::size_t i = 0; i < count; ++i) {
    Tau tau;
    tau.radius = uniform(rng, -ranges.radius, ranges.radius);
    tau.phi = uniform(rng, -ranges.phi, ranges.phi);
    tau.gamma = uniform(rng, -ranges.gamma, ranges.gamma);
    SphericalPose p = apply_perturbation(s, tau, ranges);
    tau.gamma = p.gamma - s.gamma;
    pair.perturbed.push_back(p);
    pair.taus.push_back(tau);
  }
  return pair;
}

ConeRay pixel_cone(const CameraPose& cam, int row, int col) {
  const auto& in = cam.intrinsics;
  if (row < 0 || col < 0 || row >= in.height || col >= in.width) {
    throw InvalidArgument("pixel (" + std::to_string(row) + ", " + std::to_string(col) + ") outside image");
  }
  const Vec3 local((col + 0.5 - 0.5 * in.width) / in.focal, -(row + 0.5 - 0.5 * in.height) / in.focal, -1.0);
  ConeRay ray;
  ray.origin = cam.position;
  ray.direction = (cam.rotation * local).normalized();
  ray.base_radius = (1.0 / in.focal) * 2.0 / std::sqrt(12.0);
  ray.row = row;
  ray.col = col;
  ray.near = in.near;
  ray.far = in.far;
  return ray;
}

SphericalPose sample_unseen_pose(const PoseBounds& bounds, Rng& rng) {
  if (!(bounds.radius > 0.0)) throw InvalidArgument("pose bounds need a positive radius");
  if (bounds.phi_min > bounds.phi_max || bounds.gamma_min > bounds.gamma_max) {
    throw InvalidArgument("empty pose range");
  }
  SphericalPose s;
  s.radius = bounds.radius;
  s.phi = wrap_angle(uniform(rng, bounds.phi_min, bounds.phi_max));
  s.gamma = uniform(rng, bounds.gamma_min, bounds.gamma_max);
  return s;
}

}  // namespace wah
