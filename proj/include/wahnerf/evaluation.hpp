#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wahnerf/field.hpp"
#include "wahnerf/image.hpp"
#include "wahnerf/random.hpp"
#include "wahnerf/rendering.hpp"
#include "wahnerf/scenes.hpp"

namespace wah {

/// Reported for identical images.
inline constexpr double kPsnrCap = 99.0;

struct Psnr {
  double db = 0.0;
  bool capped = false;
};

/// -10 log10(MSE) over every pixel and channel.
Psnr psnr(const Image& a, const Image& b);

/// Mean SSIM over all fully contained 11x11 windows (Gaussian, sigma 1.5)
/// of the channel-averaged images. C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b);

struct ViewMetric {
  std::string id;
  Psnr psnr;
  double ssim = 0.0;
};

/// Means and population standard deviations over views.
struct MetricReport {
  std::vector<ViewMetric> views;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;

  /// One `view_id psnr ssim` line per view ('*' marks a capped PSNR), then
  /// `mean±std <psnr_mean>±<psnr_std> <ssim_mean>±<ssim_std>`.
  std::string text() const;
  std::string csv() const;
};

MetricReport make_report(std::vector<ViewMetric> views);

/// Inference-time rendering options.
struct RenderSettings {
  std::size_t coarse_samples = 64;
  std::size_t fine_samples = 64;
  bool deformable = false;
  Vec3 background = Vec3::Ones();
  /// Rays per forward batch.
  std::size_t chunk = 512;

  RenderConfig render_config() const;
};

/// Deterministic (jitter-free) fine-pass image of `field` from `cam`.
Image render_image(const RadianceField& field, const CameraPose& cam, const RenderSettings& settings);
Image render_image(const FieldParams& params, const CameraPose& cam, const RenderSettings& settings);

/// Renders every test view and scores it against its image.
MetricReport evaluate_views(const FieldParams& params, const Dataset& data, const RenderSettings& settings);

/// Per-sample record of one ray in one pass.
struct RayProfile {
  std::size_t ray = 0;
  std::size_t view = 0;  // index among the test views
  int row = 0;
  int col = 0;
  int pass = 0;  // 0 coarse, 1 fine
  std::vector<double> t;              // interval midpoints
  std::vector<double> weight;
  std::vector<double> transmittance;  // before each sample
  std::vector<double> rgbmse;         // ||c_i - C_gt||^2
  double spread = 0.0;
  bool spread_defined = false;
};

/// Weighted standard deviation of t under weights w; undefined (false) when
/// the weights sum to less than 1e-12.
bool weight_spread(const std::vector<double>& t, const std::vector<double>& w, double& spread);

/// Coarse and fine profiles for `n_rays` random test pixels.
std::vector<RayProfile> diagnose_rays(const RadianceField& field, const Dataset& data, std::size_t n_rays,
                                      const RenderSettings& settings, Rng& rng);
std::vector<RayProfile> diagnose_rays(const FieldParams& params, const Dataset& data, std::size_t n_rays,
                                      const RenderSettings& settings, Rng& rng);

/// Header `ray,view,row,col,pass,sample,t,weight,transmittance,rgbmse`, one
/// row per sample.
std::string profiles_csv(const std::vector<RayProfile>& profiles);

/// Header `ray,view,row,col,pass,spread,defined`, one row per profile.
std::string spreads_csv(const std::vector<RayProfile>& profiles);

/// Median spread over profiles of `pass` with a defined spread; NaN if none.
double median_spread(const std::vector<RayProfile>& profiles, int pass);

double median(std::vector<double> v);

}  // namespace wah
