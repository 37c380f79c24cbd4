#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wahnerf/diffmath.hpp"

namespace wah {

struct MIConfig {
  double epsilon = 5e-4;         // u = 1 / (w + epsilon)
  double mask_threshold = 1e-4;  // samples with w <= threshold are ignored
  double rho_clip = 0.9999;      // |rho| is clamped to this before -0.5 ln(1 - rho^2)
};

/// Rays with fewer unmasked samples than this contribute zero MI.
inline constexpr std::size_t kMinMISamples = 8;

/// Mean over rays of the squared L2 color error. Both R x 3.
DualArray loss_mse(const DualArray& rendered, const DualArray& target);

/// Differentiable Gaussian MI estimate -0.5 ln(1 - rho^2) from the Pearson
/// correlation of two equally sized vectors. Zero if either has no spread.
DualArray mi_gaussian(const DualArray& u, const DualArray& v, double rho_clip = 0.9999);

/// Plug-in MI from an equal-width 2-D histogram, H(U) + H(V) - H(U, V).
/// Not differentiable; used to cross-check mi_gaussian.
double mi_histogram(std::span<const double> u, std::span<const double> v, std::size_t bins);

/// -(1/R) sum_r I(1 / (w_r + eps); o_r) over each ray's unmasked samples.
/// w and offsets are R x M; w is treated as a constant.
DualArray loss_mi(const DualArray& weights, const DualArray& offsets, const MIConfig& cfg = {});

/// Distortion loss on normalised distances, averaged over rays:
/// sum_ij w_i w_j |s_i - s_j| + (1/3) sum_i w_i^2 ds_i. All inputs R x M;
/// s need not be sorted.
DualArray loss_dist(const DualArray& weights, const DualArray& s, const DualArray& ds);

/// lambda * mi + dist.
DualArray loss_offset(const DualArray& mi, const DualArray& dist, double lambda = 5e-3);

/// Mean over perturbations and rays of the squared color difference between
/// the unseen render and each perturbed render (R x 3 each).
DualArray loss_ssl(const DualArray& unseen, const std::vector<DualArray>& perturbed);

struct PpcLoss {
  DualArray rgb;
  DualArray depth;
};

/// Rays are grouped into consecutive patches of patch_size^2 rays. Every
/// unseen ray is compared with every ray of the perturbed patch covering the
/// same pixel footprint; the squared errors are averaged over the patch, the
/// rays and the perturbations. Colors are R x 3, depths R x 1.
PpcLoss loss_ppc(const DualArray& unseen_color, const DualArray& unseen_depth,
                 const std::vector<DualArray>& perturbed_color, const std::vector<DualArray>& perturbed_depth,
                 std::size_t patch_size);

/// Sum of squared horizontal and vertical forward differences of depth inside
/// each patch (R x 1, patches of patch_size^2 rays in row-major order),
/// averaged over patches. Zero for patch_size < 2.
DualArray loss_smooth(const DualArray& depth, std::size_t patch_size);

/// Differentiable terms of one pass; unset terms are zero.
struct PassLosses {
  DualArray mse = DualArray::scalar(0.0);
  DualArray mi = DualArray::scalar(0.0);
  DualArray dist = DualArray::scalar(0.0);
  DualArray offset = DualArray::scalar(0.0);
  DualArray ppc_rgb = DualArray::scalar(0.0);
  DualArray ppc_d = DualArray::scalar(0.0);
  DualArray smooth = DualArray::scalar(0.0);
};

struct PassValues {
  double mse = 0, mi = 0, dist = 0, offset = 0, ppc_rgb = 0, ppc_d = 0, smooth = 0;
  double total = 0;
};

struct LossBreakdown {
  PassValues coarse;
  PassValues fine;
  double total = 0;
};

struct LossWeights {
  double mu = 0.5;
  double nu = 0.5;
  double coarse_coef = 0.1;
};

/// Per pass: mse + mu * offset + nu * (ppc_rgb + ppc_d) + smooth;
/// total = fine + coarse_coef * coarse. Fills `breakdown` when given.
DualArray loss_total(const PassLosses& coarse, const PassLosses& fine, const LossWeights& w,
                     LossBreakdown* breakdown = nullptr);

}  // namespace wah
