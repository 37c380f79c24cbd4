#include "wahnerf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

// Repeats an (S x 1) column into (S x n) through a constant ones row, which
// keeps the broadcast on the tape.
DualArray repeat_cols(const DualArray& column, std::size_t n) {
  return matmul(column, DualArray::full(Shape{1, n}, 1.0));
}

}  // namespace

IntervalSet IntervalSet::from_edges(std::span<const double> edges, std::size_t rays, std::size_t count) {
  if (edges.size() != rays * (count + 1)) throw InvalidArgument("edge count does not match rays x (M + 1)");
  std::vector<double> lo(rays * count), hi(rays * count);
  for (std::size_t r = 0; r < rays; ++r) {
    for (std::size_t m = 0; m < count; ++m) {
      lo[r * count + m] = edges[r * (count + 1) + m];
      hi[r * count + m] = edges[r * (count + 1) + m + 1];
    }
  }
  return IntervalSet{DualArray(Shape{rays, count}, std::move(lo)), DualArray(Shape{rays, count}, std::move(hi))};
}

std::vector<double> IntervalSet::edges() const {
  const std::size_t R = rays(), M = count();
  std::vector<double> out(R * (M + 1));
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t m = 0; m < M; ++m) out[r * (M + 1) + m] = lo[r * M + m];
    out[r * (M + 1) + M] = hi[r * M + M - 1];
  }
  return out;
}

IntervalSet stratified_intervals(double near, double far, std::size_t count, bool jitter, Rng& rng,
                                 std::size_t rays) {
  if (count == 0) throw InvalidArgument("need at least one interval");
  if (!(near < far)) throw InvalidArgument("stratified_intervals: near must be below far");
  const double step = (far - near) / static_cast<double>(count);
  std::vector<double> edges(rays * (count + 1));
  for (std::size_t r = 0; r < rays; ++r) {
    double* e = edges.data() + r * (count + 1);
    e[0] = near;
    e[count] = far;
    for (std::size_t k = 1; k < count; ++k) {
      const double nominal = near + step * static_cast<double>(k);
      e[k] = jitter ? nominal + step * (uniform01(rng) - 0.5) : nominal;
    }
  }
  return IntervalSet::from_edges(edges, rays, count);
}

FrustumGaussian frustum_gaussians(std::span<const ConeRay> rays, const IntervalSet& intervals) {
  const std::size_t R = intervals.rays(), M = intervals.count(), S = R * M;
  if (rays.size() != R) throw InvalidArgument("frustum_gaussians: ray count does not match interval rows");

  std::vector<double> origin(S * 3), dir(S * 3), dir_sq(S * 3), radius_sq(S);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t s = r * M + m;
      for (int a = 0; a < 3; ++a) {
        origin[s * 3 + a] = rays[r].origin[a];
        dir[s * 3 + a] = rays[r].direction[a];
        dir_sq[s * 3 + a] = rays[r].direction[a] * rays[r].direction[a];
      }
      radius_sq[s] = rays[r].base_radius * rays[r].base_radius;
    }
  }
  const DualArray O(Shape{S, 3}, std::move(origin));
  const DualArray D(Shape{S, 3}, std::move(dir));
  const DualArray D2(Shape{S, 3}, dir_sq);
  std::vector<double> perp(S * 3);
  for (std::size_t i = 0; i < S * 3; ++i) perp[i] = 1.0 - dir_sq[i];
  const DualArray P(Shape{S, 3}, std::move(perp));
  const DualArray r2(Shape{S, 1}, std::move(radius_sq));

  // Midpoint / half-width parameterisation of the frustum moments.
  const DualArray lo = reshape(intervals.lo, Shape{S, 1});
  const DualArray hi = reshape(intervals.hi, Shape{S, 1});
  const DualArray mu = (lo + hi) * 0.5;
  const DualArray hw = (hi - lo) * 0.5;
  const DualArray mu2 = square(mu);
  const DualArray hw2 = square(hw);
  const DualArray hw4 = square(hw2);
  const DualArray denom = mu2 * 3.0 + hw2;
  const DualArray t_mean = mu + (mu * hw2 * 2.0) / denom;
  const DualArray t_var = hw2 * (1.0 / 3.0) - (hw4 * (mu2 * 12.0 - hw2)) * (4.0 / 15.0) / square(denom);
  const DualArray r_var = r2 * (mu2 * 0.25 + hw2 * (5.0 / 12.0) - hw4 * (4.0 / 15.0) / denom);

  FrustumGaussian g;
  g.mean = O + D * repeat_cols(t_mean, 3);
  g.cov_diag = repeat_cols(t_var, 3) * D2 + repeat_cols(r_var, 3) * P;
  return g;
}

FrustumMoments frustum_gaussian(const ConeRay& cone, double t0, double t1) {
  if (!(t0 < t1)) throw InvalidArgument("frustum_gaussian: need t0 < t1");
  const IntervalSet iv{DualArray(Shape{1, 1}, {t0}), DualArray(Shape{1, 1}, {t1})};
  const FrustumGaussian g = frustum_gaussians(std::span<const ConeRay>(&cone, 1), iv);
  FrustumMoments out;
  for (int a = 0; a < 3; ++a) {
    out.mean[a] = g.mean[a];
    out.cov_diag[a] = g.cov_diag[a];
  }
  return out;
}

DualArray integrated_encoding(const FrustumGaussian& g, int levels) {
  if (levels < 1) throw InvalidArgument("encoding needs at least one level");
  const std::size_t L = static_cast<std::size_t>(levels);
  std::vector<double> scale(3 * 3 * L, 0.0), scale_sq(3 * 3 * L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double f = std::ldexp(1.0, static_cast<int>(l));
    for (std::size_t a = 0; a < 3; ++a) {
      scale[a * 3 * L + l * 3 + a] = f;
      scale_sq[a * 3 * L + l * 3 + a] = f * f;
    }
  }
  const DualArray y = matmul(g.mean, DualArray(Shape{3, 3 * L}, std::move(scale)));
  const DualArray y_var = matmul(g.cov_diag, DualArray(Shape{3, 3 * L}, std::move(scale_sq)));
  const DualArray damp = exp(y_var * -0.5);
  return concat_cols({sin(y) * damp, cos(y) * damp});
}

std::size_t direction_encoding_width(int levels) { return 3 + 6 * static_cast<std::size_t>(levels); }

DualArray direction_encoding(std::span<const ConeRay> rays, std::size_t samples_per_ray, int levels) {
  if (levels < 0) throw InvalidArgument("direction encoding levels must be non-negative");
  const std::size_t L = static_cast<std::size_t>(levels);
  const std::size_t W = direction_encoding_width(levels);
  std::vector<double> row(W);
  std::vector<double> out(rays.size() * samples_per_ray * W);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Vec3& d = rays[r].direction;
    for (std::size_t a = 0; a < 3; ++a) row[a] = d[a];
    for (std::size_t l = 0; l < L; ++l) {
      const double f = std::ldexp(1.0, static_cast<int>(l));
      for (std::size_t a = 0; a < 3; ++a) {
        row[3 + l * 3 + a] = std::sin(f * d[a]);
        row[3 + 3 * L + l * 3 + a] = std::cos(f * d[a]);
      }
    }
    for (std::size_t m = 0; m < samples_per_ray; ++m)
      std::copy(row.begin(), row.end(), out.begin() + (r * samples_per_ray + m) * W);
  }
  return DualArray(Shape{rays.size() * samples_per_ray, W}, std::move(out));
}

ShiftedIntervals apply_offsets(const IntervalSet& intervals, const DualArray& offsets, double near, double far) {
  const std::size_t R = intervals.rays(), M = intervals.count();
  if (offsets.size() != R * M) {
    throw InvalidArgument("apply_offsets: offsets " + shape_str(offsets.shape()) + " vs intervals " +
                          shape_str(intervals.lo.shape()));
  }
  const DualArray off = reshape(offsets, Shape{R, M});
  std::vector<double> lower(R * M), upper(R * M);
  for (std::size_t i = 0; i < R * M; ++i) {
    lower[i] = near - intervals.lo[i];
    upper[i] = far - intervals.hi[i];
  }
  const DualArray shift = minimum(maximum(off, DualArray(Shape{R, M}, std::move(lower))),
                                  DualArray(Shape{R, M}, std::move(upper)));
  const DualArray lo = intervals.lo + shift;
  const DualArray hi = intervals.hi + shift;

  ShiftedIntervals out;
  out.order.resize(R * M);
  for (std::size_t r = 0; r < R; ++r) {
    auto first = out.order.begin() + static_cast<std::ptrdiff_t>(r * M);
    std::iota(first, first + static_cast<std::ptrdiff_t>(M), std::size_t{0});
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(M), [&](std::size_t a, std::size_t b) {
      return lo[r * M + a] + hi[r * M + a] < lo[r * M + b] + hi[r * M + b];
    });
  }
  out.intervals.lo = gather(lo, out.order, M);
  out.intervals.hi = gather(hi, out.order, M);
  return out;
}

IntervalSet hierarchical_resample(const IntervalSet& intervals, const DualArray& weights, std::size_t fine_count,
                                  bool randomized, Rng& rng) {
  const std::size_t R = intervals.rays(), M = intervals.count();
  if (weights.size() != R * M) throw InvalidArgument("hierarchical_resample: weight count mismatch");
  if (fine_count == 0) throw InvalidArgument("hierarchical_resample: need at least one fine interval");
  const std::size_t n = fine_count + 1;
  std::vector<double> edges(R * n);
  std::vector<double> cdf(M + 1);
  for (std::size_t r = 0; r < R; ++r) {
    double wsum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double w = weights[r * M + m];
      if (w < 0.0) throw InvalidArgument("hierarchical_resample: negative weight");
      wsum += w;
    }
    cdf[0] = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double width = intervals.hi[r * M + m] - intervals.lo[r * M + m];
      const double mass = wsum > 0.0 ? weights[r * M + m] + kResamplePadding : width;
      cdf[m + 1] = cdf[m] + mass;
    }
    const double total = cdf[M];
    double* e = edges.data() + r * n;
    for (std::size_t k = 0; k < n; ++k) {
      const double u = (static_cast<double>(k) + (randomized ? uniform01(rng) : 0.5)) / static_cast<double>(n);
      const double target = u * total;
      std::size_t bin = static_cast<std::size_t>(std::upper_bound(cdf.begin() + 1, cdf.end(), target) - cdf.begin()) - 1;
      bin = std::min(bin, M - 1);
      const double mass = cdf[bin + 1] - cdf[bin];
      const double frac = mass > 0.0 ? std::clamp((target - cdf[bin]) / mass, 0.0, 1.0) : 0.0;
      const double a = intervals.lo[r * M + bin], b = intervals.hi[r * M + bin];
      e[k] = a + frac * (b - a);
    }
    std::sort(e, e + n);
  }
  return IntervalSet::from_edges(edges, R, fine_count);
}

}  // namespace wah
