#include "wahnerf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

// (R x 1) -> (R x n) on the tape.
DualArray repeat_cols(const DualArray& column, std::size_t n) {
  return matmul(column, DualArray::full(Shape{1, n}, 1.0));
}

void require_same(const DualArray& a, const DualArray& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

DualArray channel(const DualArray& x, std::size_t c) {
  std::vector<std::size_t> idx{c};
  return gather(x, idx, 1);
}

// Per-ray Gaussian MI over the samples selected by `mask` (constant 0/1).
// Rows with fewer than `min_count` selected samples, or without spread in u
// or v, give exactly zero.
DualArray batched_mi(const DualArray& u, const DualArray& v, const std::vector<double>& mask, double rho_clip,
                     std::size_t min_count) {
  const std::size_t R = u.rows(), M = u.cols();
  std::vector<double> count(R, 0.0), gate(R, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t m = 0; m < M; ++m) count[r] += mask[r * M + m];
  }
  // Spread test on values: a column is flat if every selected entry equals
  // the first one up to 1e-12 of its magnitude.
  auto spread = [&](const DualArray& x, std::size_t r) {
    double lo = INFINITY, hi = -INFINITY, mag = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (mask[r * M + m] == 0.0) continue;
      const double val = x[r * M + m];
      lo = std::min(lo, val);
      hi = std::max(hi, val);
      mag = std::max(mag, std::abs(val));
    }
    return hi - lo > 1e-12 * mag;
  };
  for (std::size_t r = 0; r < R; ++r) {
    gate[r] = (count[r] >= static_cast<double>(min_count) && spread(u, r) && spread(v, r)) ? 1.0 : 0.0;
    count[r] = std::max(count[r], 1.0);
  }
  const DualArray mk(Shape{R, M}, mask);
  const DualArray n(Shape{R, 1}, count);
  const DualArray g(Shape{R, 1}, gate);
  const DualArray not_g(Shape{R, 1}, [&] {
    std::vector<double> out(R);
    for (std::size_t r = 0; r < R; ++r) out[r] = 1.0 - gate[r];
    return out;
  }());

  const DualArray mu_u = row_sum(u * mk) / n;
  const DualArray mu_v = row_sum(v * mk) / n;
  const DualArray du = (u - repeat_cols(mu_u, M)) * mk;
  const DualArray dv = (v - repeat_cols(mu_v, M)) * mk;
  const DualArray cov = row_sum(du * dv) / n * g;
  const DualArray var_u = row_sum(square(du)) / n * g + not_g;
  const DualArray var_v = row_sum(square(dv)) / n * g + not_g;
  const DualArray rho = clamp(cov / sqrt(var_u * var_v), -rho_clip, rho_clip);
  return log(1.0 - square(rho)) * -0.5;
}

}  // namespace

DualArray loss_mse(const DualArray& rendered, const DualArray& target) {
  require_same(rendered, target, "loss_mse");
  return sum(square(rendered - target)) / static_cast<double>(rendered.rows());
}

DualArray mi_gaussian(const DualArray& u, const DualArray& v, double rho_clip) {
  if (u.size() != v.size()) {
    throw InvalidArgument("mi_gaussian: shape mismatch " + shape_str(u.shape()) + " vs " + shape_str(v.shape()));
  }
  if (u.size() < kMinMISamples) throw InvalidArgument("mi_gaussian: need at least 8 samples");
  const Shape row{1, u.size()};
  return sum(batched_mi(reshape(u, row), reshape(v, row), std::vector<double>(u.size(), 1.0), rho_clip, 2));
}

double mi_histogram(std::span<const double> u, std::span<const double> v, std::size_t bins) {
  if (u.size() != v.size() || u.empty()) throw InvalidArgument("mi_histogram: need equal, non-empty samples");
  if (bins < 2) throw InvalidArgument("mi_histogram: need at least two bins");
  auto [ulo, uhi] = std::minmax_element(u.begin(), u.end());
  auto [vlo, vhi] = std::minmax_element(v.begin(), v.end());
  const double u0 = *ulo, u1 = *uhi, v0 = *vlo, v1 = *vhi;
  if (u1 == u0 || v1 == v0) return 0.0;
  auto bin = [bins](double x, double lo, double hi) {
    const auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  std::vector<double> joint(bins * bins, 0.0), pu(bins, 0.0), pv(bins, 0.0);
  const double unit = 1.0 / static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const std::size_t a = bin(u[i], u0, u1), b = bin(v[i], v0, v1);
    joint[a * bins + b] += unit;
    pu[a] += unit;
    pv[b] += unit;
  }
  auto entropy = [](const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
      if (x > 0.0) h -= x * std::log(x);
    return h;
  };
  return entropy(pu) + entropy(pv) - entropy(joint);
}

DualArray loss_mi(const DualArray& weights, const DualArray& offsets, const MIConfig& cfg) {
  require_same(weights, offsets, "loss_mi");
  if (!(cfg.epsilon > 0.0) || cfg.mask_threshold < 0.0 || cfg.mask_threshold >= 1.0) {
    throw InvalidArgument("loss_mi: need epsilon > 0 and 0 <= mask_threshold < 1");
  }
  std::vector<double> mask(weights.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = weights[i] > cfg.mask_threshold ? 1.0 : 0.0;
  // The weights only select and scale the target; gradients reach the offsets.
  const DualArray u = 1.0 / (detach(weights) + cfg.epsilon);
  const DualArray per_ray = batched_mi(u, offsets, mask, cfg.rho_clip, kMinMISamples);
  return -sum(per_ray) / static_cast<double>(weights.rows());
}

DualArray loss_dist(const DualArray& weights, const DualArray& s, const DualArray& ds) {
  require_same(weights, s, "loss_dist");
  require_same(weights, ds, "loss_dist");
  const std::size_t R = weights.rows(), M = weights.cols();
  // Sorting by s turns |s_i - s_j| into a prefix-sum expression; the double
  // sum itself is invariant under the permutation.
  std::vector<std::size_t> order(R * M);
  for (std::size_t r = 0; r < R; ++r) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(r * M);
    std::iota(first, first + static_cast<std::ptrdiff_t>(M), std::size_t{0});
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(M),
                     [&](std::size_t a, std::size_t b) { return s[r * M + a] < s[r * M + b]; });
  }
  const DualArray w = gather(weights, order, M);
  const DualArray t = gather(s, order, M);
  const DualArray ws = w * t;
  const DualArray w_before = cumsum(w) - w;
  const DualArray ws_before = cumsum(ws) - ws;
  const DualArray cross = sum(w * (t * w_before - ws_before)) * 2.0;
  const DualArray self = sum(square(weights) * ds) * (1.0 / 3.0);
  return (cross + self) / static_cast<double>(R);
}

DualArray loss_offset(const DualArray& mi, const DualArray& dist, double lambda) { return mi * lambda + dist; }

DualArray loss_ssl(const DualArray& unseen, const std::vector<DualArray>& perturbed) {
  if (perturbed.empty()) throw InvalidArgument("loss_ssl: need at least one perturbation");
  DualArray total = DualArray::scalar(0.0);
  for (const auto& p : perturbed) {
    require_same(unseen, p, "loss_ssl");
    total = total + mean(row_sum(square(unseen - p)) );
  }
  return total / static_cast<double>(perturbed.size());
}

namespace {

// Per-ray mean over the matching perturbed patch of (a - b_i)^2, as
// (a - mean b)^2 + var b, for one channel (R x 1).
DualArray patch_error(const DualArray& a, const DualArray& b, std::size_t patch_size) {
  const std::size_t R = a.rows(), P2 = patch_size * patch_size;
  if (R % P2 != 0) {
    throw InvalidArgument("loss_ppc: " + std::to_string(R) + " rays do not form patches of " +
                          std::to_string(patch_size) + "x" + std::to_string(patch_size));
  }
  const Shape patches{R / P2, P2};
  const DualArray bp = reshape(b, patches);
  const DualArray b_mean = repeat_cols(row_mean(bp), P2);
  const DualArray b_var = repeat_cols(row_mean(square(bp - b_mean)), P2);
  return square(a - reshape(b_mean, Shape{R, 1})) + reshape(b_var, Shape{R, 1});
}

DualArray patch_term(const DualArray& unseen, const DualArray& perturbed, std::size_t patch_size) {
  std::vector<DualArray> channels;
  for (std::size_t c = 0; c < unseen.cols(); ++c) {
    channels.push_back(patch_error(channel(unseen, c), channel(perturbed, c), patch_size));
  }
  return mean(row_sum(channels.size() == 1 ? channels.front() : concat_cols(channels)));
}

}  // namespace

PpcLoss loss_ppc(const DualArray& unseen_color, const DualArray& unseen_depth,
                 const std::vector<DualArray>& perturbed_color, const std::vector<DualArray>& perturbed_depth,
                 std::size_t patch_size) {
  if (patch_size == 0) throw InvalidArgument("loss_ppc: patch size must be positive");
  if (perturbed_color.empty() || perturbed_color.size() != perturbed_depth.size()) {
    throw InvalidArgument("loss_ppc: need matching, non-empty perturbed colors and depths");
  }
  PpcLoss out{DualArray::scalar(0.0), DualArray::scalar(0.0)};
  for (std::size_t p = 0; p < perturbed_color.size(); ++p) {
    require_same(unseen_color, perturbed_color[p], "loss_ppc");
    require_same(unseen_depth, perturbed_depth[p], "loss_ppc");
    out.rgb = out.rgb + patch_term(unseen_color, perturbed_color[p], patch_size);
    out.depth = out.depth + patch_term(unseen_depth, perturbed_depth[p], patch_size);
  }
  const double P = static_cast<double>(perturbed_color.size());
  out.rgb = out.rgb / P;
  out.depth = out.depth / P;
  return out;
}

DualArray loss_smooth(const DualArray& depth, std::size_t patch_size) {
  if (patch_size < 2) return DualArray::scalar(0.0);
  const std::size_t R = depth.size(), P2 = patch_size * patch_size;
  if (R % P2 != 0) throw InvalidArgument("loss_smooth: depth count is not a multiple of the patch area");
  const DualArray d = reshape(depth, Shape{R / P2, P2});
  std::vector<std::size_t> right, left, below, above;
  for (std::size_t i = 0; i < patch_size; ++i) {
    for (std::size_t j = 0; j + 1 < patch_size; ++j) {
      right.push_back(i * patch_size + j + 1);
      left.push_back(i * patch_size + j);
      below.push_back((j + 1) * patch_size + i);
      above.push_back(j * patch_size + i);
    }
  }
  const std::size_t k = right.size();
  const DualArray dh = gather(d, right, k) - gather(d, left, k);
  const DualArray dv = gather(d, below, k) - gather(d, above, k);
  return mean(row_sum(square(dh)) + row_sum(square(dv)));
}

DualArray loss_total(const PassLosses& coarse, const PassLosses& fine, const LossWeights& w,
                     LossBreakdown* breakdown) {
  auto pass_total = [&](const PassLosses& p) {
    return p.mse + p.offset * w.mu + (p.ppc_rgb + p.ppc_d) * w.nu + p.smooth;
  };
  const DualArray lc = pass_total(coarse);
  const DualArray lf = pass_total(fine);
  const DualArray total = lf + lc * w.coarse_coef;
  if (breakdown) {
    auto values = [](const PassLosses& p, const DualArray& t) {
      PassValues v;
      v.mse = p.mse.item();
      v.mi = p.mi.item();
      v.dist = p.dist.item();
      v.offset = p.offset.item();
      v.ppc_rgb = p.ppc_rgb.item();
      v.ppc_d = p.ppc_d.item();
      v.smooth = p.smooth.item();
      v.total = t.item();
      return v;
    };
    breakdown->coarse = values(coarse, lc);
    breakdown->fine = values(fine, lf);
    breakdown->total = total.item();
  }
  return total;
}

}  // namespace wah
