#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wahnerf/geometry.hpp"
#include "wahnerf/image.hpp"
#include "wahnerf/random.hpp"
#include "wahnerf/rendering.hpp"

namespace wah {

enum class PrimitiveKind { Sphere, Box };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center = Vec3::Zero();
  /// Sphere: radius in x. Box: half-extents.
  Vec3 size = Vec3::Constant(0.5);
  double density = 10.0;
  Vec3 albedo = Vec3::Constant(0.5);

  /// Length the falloff width is measured against: the radius, or the
  /// smallest half-extent of a box.
  double scale() const;
  double signed_distance(const Vec3& x) const;
};

/// Emission-absorption scene made of soft-edged primitives with
/// view-independent color.
struct AnalyticScene {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Ones();
  double near = 2.0;
  double far = 6.0;
  /// Falloff width as a fraction of each primitive's scale.
  double falloff = 0.05;

  void validate() const;
};

struct DensitySample {
  double sigma = 0.0;
  Vec3 albedo = Vec3::Zero();
};

/// Sum of every primitive's density sigma0 * clamp(0.5 - sd / f, 0, 1) and
/// the density-weighted albedo (zero where sigma is zero).
DensitySample scene_density(const AnalyticScene& scene, const Vec3& x);

/// Evaluates the scene at each frustum mean. Offsets are constant zeros and
/// the feature is empty.
class AnalyticField final : public RadianceField {
 public:
  explicit AnalyticField(const AnalyticScene& scene) : scene_(scene) {}
  FieldOutput evaluate(std::span<const ConeRay> rays, const FrustumGaussian& gaussians) const override;

 private:
  const AnalyticScene& scene_;
};

/// Reference image by dense midpoint quadrature along each pixel's central
/// ray over [near, far] of the camera intrinsics.
Image oracle_render(const AnalyticScene& scene, const CameraPose& cam, std::size_t samples_per_ray = 4096);

/// Single sphere at the origin.
AnalyticScene one_sphere_scene();
/// Sphere and box side by side with different colors.
AnalyticScene two_primitive_scene();
/// Three overlapping primitives of mixed density.
AnalyticScene cluster_scene();

/// Text scene description, version 1:
///   wahscene 1
///   background <r> <g> <b>
///   bounds <near> <far>
///   falloff <fraction>
///   sphere <cx> <cy> <cz> <radius> <density> <r> <g> <b>
///   box <cx> <cy> <cz> <hx> <hy> <hz> <density> <r> <g> <b>
/// '#' starts a comment. background/bounds/falloff are optional.
AnalyticScene parse_scene(const std::string& text);
std::string format_scene(const AnalyticScene& scene);
AnalyticScene load_scene(const std::string& path);
void save_scene(const std::string& path, const AnalyticScene& scene);

enum class Split { Train, Test };

struct DatasetView {
  Image image;
  CameraPose camera;
  Split split = Split::Train;
};

using Dataset = std::vector<DatasetView>;

struct DatasetSpec {
  std::size_t n_train = 3;
  std::size_t n_test = 8;
  int resolution = 32;
  /// focal = focal_scale * resolution.
  double focal_scale = 1.25;
  double radius = 4.0;
  /// Train poses from the octant phi in [0, pi/2]; otherwise the whole
  /// upper hemisphere like the test poses.
  bool train_octant = true;
  double gamma_min = 0.2;
  std::size_t oracle_samples = 4096;
};

/// Poses from sample_unseen_pose, images from oracle_render. Train views
/// come first.
Dataset make_dataset(const AnalyticScene& scene, const DatasetSpec& spec, Rng& rng);

std::vector<const DatasetView*> views_of(const Dataset& data, Split split);

/// Reads transforms_train.json and, when present, transforms_test.json.
/// Frame images are composited onto white.
Dataset load_blender_format(const std::string& dir, double near = 2.0, double far = 6.0);

/// Writes transforms_<split>.json plus PNGs under <dir>/<split>/ for every
/// view in `data`. All views of one split must share intrinsics.
void write_blender_format(const std::string& dir, const Dataset& data);

}  // namespace wah
