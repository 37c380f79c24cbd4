#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "wahnerf/diffmath.hpp"
#include "wahnerf/field.hpp"
#include "wahnerf/geometry.hpp"
#include "wahnerf/sampling.hpp"

namespace wah {

/// Per-ray quadrature results for a batch of R rays with M samples each.
struct RenderOutput {
  DualArray color;          // R x 3
  DualArray depth;          // R x 1
  DualArray weights;        // R x M
  DualArray transmittance;  // R x (M+1), first column is 1
  DualArray accumulation;   // R x 1
};

struct Compositing {
  DualArray weights;        // R x M
  DualArray transmittance;  // R x (M+1)
};

/// T_i = exp(-sum_{j<i} sigma_j delta_j), w_i = T_i (1 - exp(-sigma_i delta_i)).
/// Both arguments are R x M.
Compositing weights_from_density(const DualArray& sigma, const DualArray& delta);

/// Color = sum_i w_i c_i (+ T_{M+1} * background), depth = sum_i w_i t_i + T_{M+1} * far.
/// `colors` holds one row per sample (R*M x 3, ray-major).
RenderOutput composite(const Compositing& c, const DualArray& colors, const DualArray& t_mid, double far,
                       const std::optional<Vec3>& background);

/// Anything that maps frustum Gaussians to density, color and offsets.
class RadianceField {
 public:
  virtual ~RadianceField() = default;
  virtual FieldOutput evaluate(std::span<const ConeRay> rays, const FrustumGaussian& gaussians) const = 0;
};

/// The learned field: integrated encoding + direction encoding + MLP.
class NeuralField final : public RadianceField {
 public:
  explicit NeuralField(const FieldVars& vars) : vars_(vars) {}
  FieldOutput evaluate(std::span<const ConeRay> rays, const FrustumGaussian& gaussians) const override;

 private:
  const FieldVars& vars_;
};

struct RenderConfig {
  std::size_t coarse_samples = 64;
  std::size_t fine_samples = 64;
  /// Shift fine-pass frustums by the predicted offsets.
  bool deformable = false;
  /// Also shift coarse-pass frustums (only meaningful with `deformable`).
  bool deformable_coarse = false;
  /// Jittered coarse edges and randomized fine draws (training); otherwise
  /// both are deterministic.
  bool randomized = false;
  std::optional<Vec3> background = Vec3::Ones();
};

struct PassResult {
  RenderOutput render;
  IntervalSet intervals;  // final (possibly shifted) intervals, sorted by midpoint
  FieldOutput field;      // field evaluated on `intervals`
  /// Offsets that produced `intervals`, aligned with them (R x M). Empty
  /// (size 1, zero) when the pass was not deformed.
  DualArray offsets;
  bool deformed = false;
};

struct ConeRender {
  PassResult coarse;
  PassResult fine;
};

/// Coarse pass on stratified intervals, fine pass on intervals resampled
/// from the coarse weights; optional deformation per pass. All rays must
/// share near and far.
ConeRender render_rays(const RadianceField& field, std::span<const ConeRay> rays, const RenderConfig& cfg, Rng& rng);

inline ConeRender render_cone(const RadianceField& field, const ConeRay& ray, const RenderConfig& cfg, Rng& rng) {
  return render_rays(field, std::span<const ConeRay>(&ray, 1), cfg, rng);
}

/// Renders one pass on given intervals (no resampling).
PassResult render_pass(const RadianceField& field, std::span<const ConeRay> rays, const IntervalSet& intervals,
                       bool deformable, const std::optional<Vec3>& background);

}  // namespace wah
