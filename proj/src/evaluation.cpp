#include "wahnerf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wahnerf/config.hpp"
#include "wahnerf/error.hpp"

namespace wah {

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
    throw InvalidArgument(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
}

std::vector<double> gray(const Image& img) {
  std::vector<double> g(img.pixels());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (img.rgb[i * 3] + img.rgb[i * 3 + 1] + img.rgb[i * 3 + 2]) / 3.0;
  return g;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace

Psnr psnr(const Image& a, const Image& b) {
  require_same_size(a, b, "psnr");
  if (a.rgb.empty()) throw InvalidArgument("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) se += (a.rgb[i] - b.rgb[i]) * (a.rgb[i] - b.rgb[i]);
  const double mse = se / static_cast<double>(a.rgb.size());
  if (mse == 0.0) return {kPsnrCap, true};
  const double db = -10.0 * std::log10(mse);
  if (db >= kPsnrCap) return {kPsnrCap, true};
  return {db, false};
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b, "ssim");
  constexpr int K = 11;
  constexpr double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (a.width < K || a.height < K) throw InvalidArgument("ssim: image smaller than the 11x11 window");
  double kernel[K];
  double norm = 0.0;
  for (int i = 0; i < K; ++i) {
    const double d = i - K / 2;
    kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    norm += kernel[i];
  }
  for (double& k : kernel) k /= norm;

  const std::vector<double> x = gray(a), y = gray(b);
  const int W = a.width, H = a.height;
  double total = 0.0;
  for (int r = 0; r + K <= H; ++r) {
    for (int c = 0; c + K <= W; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) {
          const double w = kernel[i] * kernel[j];
          const std::size_t p = static_cast<std::size_t>(r + i) * W + (c + j);
          mx += w * x[p];
          my += w * y[p];
          sxx += w * x[p] * x[p];
          syy += w * y[p] * y[p];
          sxy += w * x[p] * y[p];
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
    }
  }
  return total / static_cast<double>((H - K + 1) * (W - K + 1));
}

std::string MetricReport::text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  for (const auto& v : views) out << v.id << ' ' << v.psnr.db << (v.psnr.capped ? "*" : "") << ' ' << v.ssim << '\n';
  out << "mean±std " << psnr_mean << "±" << psnr_std << ' ' << ssim_mean << "±" << ssim_std << '\n';
  return out.str();
}

std::string MetricReport::csv() const {
  std::string out = "view_id,psnr,psnr_capped,ssim\n";
  for (const auto& v : views) {
    out += v.id + ',' + format_double(v.psnr.db) + ',' + (v.psnr.capped ? "1" : "0") + ',' + format_double(v.ssim) + '\n';
  }
  return out;
}

MetricReport make_report(std::vector<ViewMetric> views) {
  MetricReport r;
  r.views = std::move(views);
  std::vector<double> p, s;
  for (const auto& v : r.views) {
    p.push_back(v.psnr.db);
    s.push_back(v.ssim);
  }
  mean_std(p, r.psnr_mean, r.psnr_std);
  mean_std(s, r.ssim_mean, r.ssim_std);
  return r;
}

RenderConfig RenderSettings::render_config() const {
  RenderConfig rc;
  rc.coarse_samples = coarse_samples;
  rc.fine_samples = fine_samples;
  rc.deformable = deformable;
  rc.randomized = false;
  rc.background = background;
  return rc;
}

Image render_image(const RadianceField& field, const CameraPose& cam, const RenderSettings& settings) {
  if (settings.chunk == 0) throw InvalidArgument("render_image: chunk must be positive");
  const Intrinsics& in = cam.intrinsics;
  Image img(in.width, in.height);
  std::vector<ConeRay> rays;
  for (int r = 0; r < in.height; ++r)
    for (int c = 0; c < in.width; ++c) rays.push_back(pixel_cone(cam, r, c));
  const RenderConfig rc = settings.render_config();
  Rng unused(0);
  for (std::size_t start = 0; start < rays.size(); start += settings.chunk) {
    const std::size_t n = std::min(settings.chunk, rays.size() - start);
    const ConeRender out = render_rays(field, std::span<const ConeRay>(rays.data() + start, n), rc, unused);
    const auto color = out.fine.render.color.values();
    std::copy(color.begin(), color.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(start * 3));
  }
  return img;
}

Image render_image(const FieldParams& params, const CameraPose& cam, const RenderSettings& settings) {
  const FieldVars vars = bind(params, nullptr);
  return render_image(NeuralField(vars), cam, settings);
}

MetricReport evaluate_views(const FieldParams& params, const Dataset& data, const RenderSettings& settings) {
  const FieldVars vars = bind(params, nullptr);
  const NeuralField field(vars);
  std::vector<ViewMetric> out;
  const auto views = views_of(data, Split::Test);
  if (views.empty()) throw InvalidArgument("evaluate_views: dataset has no test views");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Image img = render_image(field, views[i]->camera, settings);
    out.push_back({std::to_string(i), psnr(img, views[i]->image), ssim(img, views[i]->image)});
  }
  return make_report(std::move(out));
}

bool weight_spread(const std::vector<double>& t, const std::vector<double>& w, double& spread) {
  if (t.size() != w.size()) throw InvalidArgument("weight_spread: length mismatch");
  double W = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    W += w[i];
    mean += w[i] * t[i];
  }
  if (!(W >= 1e-12)) {
    spread = std::numeric_limits<double>::quiet_NaN();
    return false;
  }
  mean /= W;
  double var = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) var += w[i] * (t[i] - mean) * (t[i] - mean);
  spread = std::sqrt(var / W);
  return true;
}

std::vector<RayProfile> diagnose_rays(const RadianceField& field, const Dataset& data, std::size_t n_rays,
                                      const RenderSettings& settings, Rng& rng) {
  const auto views = views_of(data, Split::Test);
  if (views.empty()) throw InvalidArgument("diagnose_rays: dataset has no test views");
  std::vector<ConeRay> rays;
  std::vector<std::size_t> view_of;
  for (std::size_t k = 0; k < n_rays; ++k) {
    const std::size_t v = uniform_index(rng, views.size());
    const Intrinsics& in = views[v]->camera.intrinsics;
    const int r = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(in.height)));
    const int c = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(in.width)));
    rays.push_back(pixel_cone(views[v]->camera, r, c));
    view_of.push_back(v);
  }
  std::vector<RayProfile> out;
  if (rays.empty()) return out;
  const RenderConfig rc = settings.render_config();
  Rng unused(0);
  const ConeRender cr = render_rays(field, rays, rc, unused);
  for (int pass = 0; pass < 2; ++pass) {
    const PassResult& p = pass == 0 ? cr.coarse : cr.fine;
    const std::size_t M = p.intervals.count();
    const DualArray mid = p.intervals.midpoints();
    for (std::size_t k = 0; k < rays.size(); ++k) {
      RayProfile prof;
      prof.ray = k;
      prof.view = view_of[k];
      prof.row = rays[k].row;
      prof.col = rays[k].col;
      prof.pass = pass;
      const Image& gt = views[view_of[k]]->image;
      for (std::size_t m = 0; m < M; ++m) {
        prof.t.push_back(mid.at(k, m));
        prof.weight.push_back(p.render.weights.at(k, m));
        prof.transmittance.push_back(p.render.transmittance.at(k, m));
        double e = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double d = p.field.color.at(k * M + m, static_cast<std::size_t>(ch)) - gt.at(prof.row, prof.col, ch);
          e += d * d;
        }
        prof.rgbmse.push_back(e);
      }
      prof.spread_defined = weight_spread(prof.t, prof.weight, prof.spread);
      out.push_back(std::move(prof));
    }
  }
  return out;
}

std::vector<RayProfile> diagnose_rays(const FieldParams& params, const Dataset& data, std::size_t n_rays,
                                      const RenderSettings& settings, Rng& rng) {
  const FieldVars vars = bind(params, nullptr);
  return diagnose_rays(NeuralField(vars), data, n_rays, settings, rng);
}

std::string profiles_csv(const std::vector<RayProfile>& profiles) {
  std::string out = "ray,view,row,col,pass,sample,t,weight,transmittance,rgbmse\n";
  for (const auto& p : profiles) {
    const std::string prefix = std::to_string(p.ray) + ',' + std::to_string(p.view) + ',' + std::to_string(p.row) +
                               ',' + std::to_string(p.col) + ',' + std::to_string(p.pass) + ',';
    for (std::size_t i = 0; i < p.t.size(); ++i) {
      out += prefix + std::to_string(i) + ',' + format_double(p.t[i]) + ',' + format_double(p.weight[i]) + ',' +
             format_double(p.transmittance[i]) + ',' + format_double(p.rgbmse[i]) + '\n';
    }
  }
  return out;
}

std::string spreads_csv(const std::vector<RayProfile>& profiles) {
  std::string out = "ray,view,row,col,pass,spread,defined\n";
  for (const auto& p : profiles) {
    out += std::to_string(p.ray) + ',' + std::to_string(p.view) + ',' + std::to_string(p.row) + ',' +
           std::to_string(p.col) + ',' + std::to_string(p.pass) + ',' +
           (p.spread_defined ? format_double(p.spread) : std::string("nan")) + ',' + (p.spread_defined ? "1" : "0") +
           '\n';
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double median_spread(const std::vector<RayProfile>& profiles, int pass) {
  std::vector<double> s;
  for (const auto& p : profiles)
    if (p.pass == pass && p.spread_defined) s.push_back(p.spread);
  return median(std::move(s));
}

}  // namespace wah
