#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wahnerf/diffmath.hpp"
#include "wahnerf/geometry.hpp"
#include "wahnerf/random.hpp"

namespace wah {

/// M intervals per ray for a batch of R rays, stored as their lower and upper
/// ends (R x M each). Fresh interval sets are contiguous, so hi[m] == lo[m+1];
/// after apply_offsets neighbouring intervals may overlap.
struct IntervalSet {
  DualArray lo;
  DualArray hi;

  std::size_t rays() const { return lo.rows(); }
  std::size_t count() const { return lo.cols(); }
  DualArray midpoints() const { return (lo + hi) * 0.5; }
  DualArray widths() const { return hi - lo; }

  /// Builds a contiguous set from per-ray edges (R x (M+1), row-major).
  static IntervalSet from_edges(std::span<const double> edges, std::size_t rays, std::size_t count);
  /// Per-ray edges of a contiguous set (R x (M+1)). Values only.
  std::vector<double> edges() const;
};

/// Gaussian approximation of each conical frustum, one row per sample
/// (S = R*M rows, ray-major): world-space mean and diagonal covariance.
struct FrustumGaussian {
  DualArray mean;      // S x 3
  DualArray cov_diag;  // S x 3
};

/// M equal bins over [near, far] for `rays` rays. With jitter every interior
/// edge is redrawn uniformly within one bin width centred on its nominal
/// position; the end edges stay at near and far.
IntervalSet stratified_intervals(double near, double far, std::size_t count, bool jitter, Rng& rng,
                                 std::size_t rays = 1);

/// Closed-form frustum moments for every interval of every ray. Written on
/// the tape so gradients reach the interval ends.
FrustumGaussian frustum_gaussians(std::span<const ConeRay> rays, const IntervalSet& intervals);

/// Single frustum [t0, t1] of `cone`, values only.
struct FrustumMoments {
  Vec3 mean;
  Vec3 cov_diag;
};
FrustumMoments frustum_gaussian(const ConeRay& cone, double t0, double t1);

/// Integrated positional encoding: for l in [0, levels) and each axis,
/// sin(2^l mu) exp(-4^l var / 2), then the cosines. S x (6 * levels).
DualArray integrated_encoding(const FrustumGaussian& g, int levels);

/// Plain encoding of the unit view direction, repeated for each of the
/// `samples_per_ray` samples: [d, sin(2^l d), cos(2^l d)]. S x (3 + 6 * levels).
DualArray direction_encoding(std::span<const ConeRay> rays, std::size_t samples_per_ray, int levels);
std::size_t direction_encoding_width(int levels);

struct ShiftedIntervals {
  IntervalSet intervals;
  /// order[r * M + m] is the source interval of output slot m on ray r.
  std::vector<std::size_t> order;
};

/// Rigidly translates interval m of ray r by offsets[r, m]. The shift is
/// clamped so the interval stays within [near, far]; intervals are then
/// stably re-sorted by midpoint. Differentiable in the offsets.
ShiftedIntervals apply_offsets(const IntervalSet& intervals, const DualArray& offsets, double near, double far);

/// Padding added to every weight before the fine-sampling PDF is normalised.
inline constexpr double kResamplePadding = 0.01;

/// Inverse-transform sampling of `fine_count` + 1 sorted edges per ray from the
/// piecewise-constant PDF proportional to (w + padding) over `intervals`.
/// All-zero weights on a ray fall back to a PDF uniform in t. Randomized draws
/// are stratified in u; otherwise u sits at stratum centres. The result is
/// detached from any tape.
IntervalSet hierarchical_resample(const IntervalSet& intervals, const DualArray& weights, std::size_t fine_count,
                                  bool randomized, Rng& rng);

}  // namespace wah
