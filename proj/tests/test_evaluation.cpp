#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "wahnerf/error.hpp"
#include "wahnerf/evaluation.hpp"

using namespace wah;

namespace {

Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (double& v : img.rgb) v = uniform01(rng);
  return img;
}

Dataset single_test_view(int res) {
  Intrinsics in;
  in.width = in.height = res;
  in.focal = 1.25 * res;
  DatasetView v;
  v.camera = pose_from_sphere({4.0, 0.3, 0.4}, in);
  v.image = Image(res, res, 0.5);
  v.split = Split::Test;
  return {v};
}

AnalyticScene opaque_wall() {
  AnalyticScene wall;
  wall.primitives = {Primitive{PrimitiveKind::Box, Vec3(0, 0, -1.5), Vec3(3, 3, 1.5), 1000.0, Vec3(0.3, 0.6, 0.9)}};
  return wall;
}

// Spread of a 16384-sample quadrature along the central ray.
double dense_spread(const AnalyticScene& scene, const ConeRay& r) {
  const int n = 16384;
  const double h = (r.far - r.near) / n;
  double T = 1.0;
  std::vector<double> t, w;
  for (int i = 0; i < n; ++i) {
    const double tm = r.near + (i + 0.5) * h;
    const double a = 1.0 - std::exp(-scene_density(scene, r.origin + tm * r.direction).sigma * h);
    t.push_back(tm);
    w.push_back(T * a);
    T *= 1.0 - a;
  }
  double s = 0.0;
  weight_spread(t, w, s);
  return s;
}

}  // namespace

TEST_CASE("PSNR") {
  Rng rng(1);
  const Image a = random_image(rng, 16, 12);
  const Psnr same = psnr(a, a);
  CHECK(same.db == kPsnrCap);
  CHECK(same.capped);

  const Image g1(8, 8, 0.3), g2(8, 8, 0.4);
  CHECK(psnr(g1, g2).db == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_FALSE(psnr(g1, g2).capped);

  const Image b = random_image(rng, 16, 12);
  double se = 0.0;
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 16; ++c)
      for (int ch = 0; ch < 3; ++ch) se += std::pow(a.at(r, c, ch) - b.at(r, c, ch), 2);
  CHECK(std::abs(psnr(a, b).db - 10.0 * std::log10(16 * 12 * 3 / se)) < 1e-9);
  CHECK(std::abs(psnr(a, b).db - psnr(b, a).db) <= 1e-12);
  CHECK_THROWS_AS(psnr(a, Image(12, 16)), InvalidArgument);
}

TEST_CASE("SSIM") {
  Rng rng(2);
  const Image a = random_image(rng, 24, 20);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Image checker(24, 24), inverse(24, 24);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = ((r / 2 + c / 2) % 2) ? 0.95 : 0.05;
        checker.rgb[(r * 24 + c) * 3 + ch] = v;
        inverse.rgb[(r * 24 + c) * 3 + ch] = 1.0 - v;
      }
  CHECK(ssim(checker, inverse) < 0.1);

  const double m1 = 0.2, m2 = 0.7, C1 = 1e-4;
  CHECK(ssim(Image(16, 16, m1), Image(16, 16, m2)) ==
        doctest::Approx((2 * m1 * m2 + C1) / (m1 * m1 + m2 * m2 + C1)).epsilon(1e-12));

  const Image b = random_image(rng, 24, 20);
  const double s = ssim(a, b);
  CHECK(std::abs(s - ssim(b, a)) <= 1e-12);
  CHECK((s >= -1.0 && s <= 1.0));
  CHECK_THROWS_AS(ssim(Image(10, 30), Image(10, 30)), InvalidArgument);
}

TEST_CASE("metric report formats") {
  const MetricReport r = make_report({{"0", {20.0, false}, 0.5}, {"1", {99.0, true}, 0.7}});
  CHECK(r.psnr_mean == doctest::Approx(59.5));
  CHECK(r.psnr_std == doctest::Approx(39.5));
  CHECK(r.ssim_std == doctest::Approx(0.1));
  const std::string text = r.text();
  CHECK(text.find("0 20.0000 0.5000\n") == 0);
  CHECK(text.find("1 99.0000* 0.7000\n") != std::string::npos);
  CHECK(text.find("mean±std 59.5000±39.5000 0.6000±0.1000\n") != std::string::npos);
  CHECK(r.csv() == "view_id,psnr,psnr_capped,ssim\n0,20,0,0.5\n1,99,1,0.7\n");
}

TEST_CASE("weight spread") {
  double s = 0.0;
  CHECK(weight_spread({1, 2, 3}, {0, 1, 0}, s));
  CHECK(s == 0.0);
  CHECK(weight_spread({1, 3}, {0.5, 0.5}, s));
  CHECK(s == doctest::Approx(1.0));
  CHECK_FALSE(weight_spread({1, 2}, {0, 0}, s));
  CHECK(std::isnan(s));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(std::isnan(median({})));
}

TEST_CASE("ray diagnostics on an empty scene") {
  AnalyticScene empty;
  const AnalyticField field(empty);
  const Dataset data = single_test_view(8);
  RenderSettings rs;
  rs.coarse_samples = 16;
  rs.fine_samples = 24;
  Rng rng(3);
  const auto prof = diagnose_rays(field, data, 5, rs, rng);
  REQUIRE(prof.size() == 10);
  for (const auto& p : prof) {
    CHECK_FALSE(p.spread_defined);
    CHECK(p.t.size() == (p.pass == 0 ? 16u : 24u));
    for (double w : p.weight) CHECK(w == 0.0);
    for (double t : p.transmittance) CHECK(t == 1.0);
  }
  CHECK(std::isnan(median_spread(prof, 1)));

  std::istringstream csv(profiles_csv(prof));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "ray,view,row,col,pass,sample,t,weight,transmittance,rgbmse");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 5 * (16 + 24));
  CHECK(spreads_csv(prof).find(",nan,0\n") != std::string::npos);
}

TEST_CASE("fine pass resolves an opaque wall") {
  const AnalyticScene wall = opaque_wall();
  const AnalyticField field(wall);
  const Dataset data = single_test_view(16);
  RenderSettings rs;
  Rng rng(4);
  const auto prof = diagnose_rays(field, data, 100, rs, rng);
  std::vector<double> coarse_err, fine_err;
  for (const auto& p : prof) {
    REQUIRE(p.spread_defined);
    for (std::size_t i = 1; i < p.transmittance.size(); ++i) CHECK(p.transmittance[i] <= p.transmittance[i - 1]);
    // The per-sample error is measured against a flat 0.5 target.
    for (std::size_t i = 0; i < p.t.size(); ++i) {
      if (p.weight[i] > 0.5) CHECK(p.rgbmse[i] == doctest::Approx(0.04 + 0.01 + 0.16).epsilon(1e-9));
    }
    const double ref = dense_spread(wall, pixel_cone(data[0].camera, p.row, p.col));
    (p.pass == 0 ? coarse_err : fine_err).push_back(std::abs(p.spread - ref));
  }
  MESSAGE("median |spread - dense| coarse " << median(coarse_err) << " fine " << median(fine_err));
  CHECK(median(fine_err) < median(coarse_err));
  CHECK(median(fine_err) < 1e-3);
}

TEST_CASE("image rendering from parameters") {
  LayerSpec spec;
  spec.pos_levels = 2;
  spec.dir_levels = 1;
  spec.trunk_depth = 1;
  spec.trunk_width = 4;
  spec.skip_layer = -1;
  spec.color_width = 4;
  const FieldParams zero = zero_params(spec);
  const Dataset data = single_test_view(12);
  RenderSettings rs;
  rs.coarse_samples = 8;
  rs.fine_samples = 8;
  rs.chunk = 7;
  const Image img = render_image(zero, data[0].camera, rs);
  CHECK(img.width == 12);
  // Zero parameters give grey color over a white background.
  for (double v : img.rgb) CHECK((v > 0.5 && v < 1.0));
  rs.chunk = 1000;
  CHECK(render_image(zero, data[0].camera, rs).rgb == img.rgb);
  rs.chunk = 0;
  CHECK_THROWS_AS(render_image(zero, data[0].camera, rs), InvalidArgument);

  const MetricReport r = evaluate_views(zero, data, RenderSettings{8, 8, false, Vec3::Ones(), 64});
  CHECK(r.views.size() == 1);
  CHECK(r.views[0].psnr.db == doctest::Approx(psnr(img, data[0].image).db));
}
