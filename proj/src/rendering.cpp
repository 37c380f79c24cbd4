#include "wahnerf/rendering.hpp"

#include <numeric>

#include "wahnerf/error.hpp"

namespace wah {

Compositing weights_from_density(const DualArray& sigma, const DualArray& delta) {
  if (sigma.shape() != delta.shape() || sigma.shape().size() != 2 || sigma.cols() == 0) {
    throw InvalidArgument("weights_from_density: shape mismatch " + shape_str(sigma.shape()) + " vs " +
                          shape_str(delta.shape()));
  }
  const DualArray optical = sigma * delta;
  const DualArray inclusive = cumsum(optical);
  const std::size_t M = sigma.cols();
  // Shift rather than subtract so T stays exactly non-increasing.
  std::vector<std::size_t> shift(M - 1);
  std::iota(shift.begin(), shift.end(), 0);
  const DualArray zero = DualArray::zeros(Shape{sigma.rows(), 1});
  const DualArray exclusive = M == 1 ? zero : concat_cols({zero, gather(inclusive, shift, M - 1)});
  std::vector<std::size_t> last{M - 1};
  const DualArray total = gather(inclusive, last, 1);

  Compositing c;
  const DualArray trans_before = exp(-exclusive);
  c.weights = trans_before * (1.0 - exp(-optical));
  c.transmittance = concat_cols({trans_before, exp(-total)});
  return c;
}

RenderOutput composite(const Compositing& c, const DualArray& colors, const DualArray& t_mid, double far,
                       const std::optional<Vec3>& background) {
  const std::size_t R = c.weights.rows(), M = c.weights.cols();
  if (colors.rows() != R * M || colors.cols() != 3) {
    throw InvalidArgument("composite: colors " + shape_str(colors.shape()) + " do not match weights " +
                          shape_str(c.weights.shape()));
  }
  if (t_mid.shape() != c.weights.shape()) {
    throw InvalidArgument("composite: depths " + shape_str(t_mid.shape()) + " vs weights " +
                          shape_str(c.weights.shape()));
  }
  std::vector<std::size_t> remaining{M};
  const DualArray residual = gather(c.transmittance, remaining, 1);  // R x 1
  const DualArray per_ray = reshape(colors, Shape{R, 3 * M});

  std::vector<DualArray> channels;
  std::vector<std::size_t> idx(M);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t m = 0; m < M; ++m) idx[m] = 3 * m + ch;
    DualArray value = row_sum(c.weights * gather(per_ray, idx, M));
    if (background) value = value + residual * (*background)[static_cast<int>(ch)];
    channels.push_back(value);
  }

  RenderOutput out;
  out.color = concat_cols(channels);
  out.depth = row_sum(c.weights * t_mid) + residual * far;
  out.weights = c.weights;
  out.transmittance = c.transmittance;
  out.accumulation = row_sum(c.weights);
  return out;
}

FieldOutput NeuralField::evaluate(std::span<const ConeRay> rays, const FrustumGaussian& g) const {
  const std::size_t per_ray = rays.empty() ? 0 : g.mean.rows() / rays.size();
  const DualArray pos = integrated_encoding(g, vars_.spec.pos_levels);
  const DualArray dir = direction_encoding(rays, per_ray, vars_.spec.dir_levels);
  return field_forward(vars_, pos, dir);
}

PassResult render_pass(const RadianceField& field, std::span<const ConeRay> rays, const IntervalSet& intervals,
                       bool deformable, const std::optional<Vec3>& background) {
  const std::size_t R = intervals.rays(), M = intervals.count();
  const double near = rays.front().near, far = rays.front().far;

  PassResult pass;
  pass.intervals = intervals;
  pass.field = field.evaluate(rays, frustum_gaussians(rays, intervals));
  if (deformable) {
    const DualArray raw = reshape(pass.field.offset, Shape{R, M});
    ShiftedIntervals shifted = apply_offsets(intervals, raw, near, far);
    pass.intervals = shifted.intervals;
    pass.offsets = gather(raw, shifted.order, M);
    pass.field = field.evaluate(rays, frustum_gaussians(rays, pass.intervals));
    pass.deformed = true;
  }
  const DualArray sigma = reshape(pass.field.sigma, Shape{R, M});
  const Compositing c = weights_from_density(sigma, pass.intervals.widths());
  pass.render = composite(c, pass.field.color, pass.intervals.midpoints(), far, background);
  return pass;
}

ConeRender render_rays(const RadianceField& field, std::span<const ConeRay> rays, const RenderConfig& cfg, Rng& rng) {
  if (rays.empty()) throw InvalidArgument("render_rays: no rays");
  const double near = rays.front().near, far = rays.front().far;
  for (const auto& r : rays) {
    if (r.near != near || r.far != far) throw InvalidArgument("render_rays: rays in a batch must share near/far");
  }
  ConeRender out;
  const IntervalSet coarse = stratified_intervals(near, far, cfg.coarse_samples, cfg.randomized, rng, rays.size());
  out.coarse = render_pass(field, rays, coarse, cfg.deformable && cfg.deformable_coarse, cfg.background);
  const IntervalSet fine = hierarchical_resample(out.coarse.intervals, out.coarse.render.weights, cfg.fine_samples,
                                                 cfg.randomized, rng);
  out.fine = render_pass(field, rays, fine, cfg.deformable, cfg.background);
  return out;
}

}  // namespace wah
