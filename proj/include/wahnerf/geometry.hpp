#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "wahnerf/random.hpp"

namespace wah {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Camera placement on a sphere around `target`. gamma is measured from +z.
struct SphericalPose {
  double radius = 4.0;  // F
  double phi = 0.0;     // azimuth
  double gamma = 1.0;   // polar angle
  Vec3 target = Vec3::Zero();
};

struct Intrinsics {
  double focal = 40.0;  // pixels
  int width = 32;
  int height = 32;
  double near = 2.0;
  double far = 6.0;
};

/// World-from-camera pose. The camera looks down its local -z axis with +y up
/// (the Blender/OpenGL convention).
struct CameraPose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Intrinsics intrinsics;

  Vec3 forward() const { return -rotation.col(2); }
};

struct ConeRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  double base_radius = 0.0;        // cone radius at unit distance
  int row = 0;
  int col = 0;
  double near = 0.0;
  double far = 1.0;
};

/// Symmetric half-widths of the uniform perturbation drawn for each component.
struct TauRanges {
  double radius = 0.0;
  double phi = 0.0;
  double gamma = 0.0;
  // Perturbed polar angles are clamped into the open interval (gamma_min, gamma_max).
  double gamma_min = 1e-3;
  double gamma_max = 3.14159265358979323846 - 1e-3;
};

struct Tau {
  double radius = 0.0;
  double phi = 0.0;
  double gamma = 0.0;
};

struct PosePair {
  SphericalPose unseen;
  std::vector<SphericalPose> perturbed;
  std::vector<Tau> taus;
};

/// Region of the viewing sphere unseen poses are drawn from.
struct PoseBounds {
  double radius = 4.0;
  double phi_min = 0.0;
  double phi_max = 2.0 * 3.14159265358979323846;
  double gamma_min = 0.2;
  double gamma_max = 3.14159265358979323846 / 2.0;
};

/// Look-at camera on the sphere, world +z as the up reference. Rejects
/// radius <= 0 and gamma outside (0, pi).
CameraPose pose_from_sphere(const SphericalPose& s, const Intrinsics& intrinsics);

/// Inverse of the position part of pose_from_sphere.
SphericalPose sphere_from_position(const Vec3& position, const Vec3& target = Vec3::Zero());

/// Applies an explicit perturbation: radius, azimuth and polar angle shifted
/// additively, azimuth wrapped into [0, 2pi), polar angle clamped into
/// (gamma_min, gamma_max).
SphericalPose apply_perturbation(const SphericalPose& s, const Tau& tau, const TauRanges& ranges);

/// Draws `count` perturbations with each tau uniform in its symmetric range.
/// The recorded taus are the effective ones after wrapping and clamping.
PosePair perturb_pose(const SphericalPose& s, const TauRanges& ranges, Rng& rng, std::size_t count = 1);

/// Cone through the center of pixel (row, col).
ConeRay pixel_cone(const CameraPose& cam, int row, int col);

/// Uniform azimuth and polar angle inside the bounds at a fixed radius.
SphericalPose sample_unseen_pose(const PoseBounds& bounds, Rng& rng);

/// Wraps an angle into [0, 2pi).
double wrap_angle(double a);

}  // namespace wah
