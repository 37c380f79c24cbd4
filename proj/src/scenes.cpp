#include "wahnerf/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wahnerf/error.hpp"

namespace wah {

namespace fs = std::filesystem;

double Primitive::scale() const { return kind == PrimitiveKind::Sphere ? size.x() : size.minCoeff(); }

double Primitive::signed_distance(const Vec3& x) const {
  const Vec3 p = x - center;
  if (kind == PrimitiveKind::Sphere) return p.norm() - size.x();
  const Vec3 q = p.cwiseAbs() - size;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

void AnalyticScene::validate() const {
  if (!(near > 0.0 && near < far)) throw InvalidArgument("scene bounds need 0 < near < far");
  if (!(falloff > 0.0)) throw InvalidArgument("scene falloff must be positive");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& p = primitives[i];
    const std::string tag = "primitive " + std::to_string(i);
    if (!(p.density >= 0.0)) throw InvalidArgument(tag + ": density must be non-negative");
    if (!(p.scale() > 0.0)) throw InvalidArgument(tag + ": size must be positive");
    if ((p.albedo.array() < 0.0).any() || (p.albedo.array() > 1.0).any()) {
      throw InvalidArgument(tag + ": albedo outside [0, 1]");
    }
  }
  if ((background.array() < 0.0).any() || (background.array() > 1.0).any()) {
    throw InvalidArgument("background outside [0, 1]");
  }
}

DensitySample scene_density(const AnalyticScene& scene, const Vec3& x) {
  DensitySample out;
  Vec3 weighted = Vec3::Zero();
  for (const auto& p : scene.primitives) {
    const double width = scene.falloff * p.scale();
    const double s = p.density * std::clamp(0.5 - p.signed_distance(x) / width, 0.0, 1.0);
    out.sigma += s;
    weighted += s * p.albedo;
  }
  if (out.sigma > 0.0) out.albedo = weighted / out.sigma;
  return out;
}

FieldOutput AnalyticField::evaluate(std::span<const ConeRay>, const FrustumGaussian& g) const {
  const std::size_t S = g.mean.rows();
  std::vector<double> sigma(S), color(S * 3);
  for (std::size_t i = 0; i < S; ++i) {
    const Vec3 x(g.mean[i * 3], g.mean[i * 3 + 1], g.mean[i * 3 + 2]);
    const DensitySample d = scene_density(scene_, x);
    sigma[i] = d.sigma;
    for (int c = 0; c < 3; ++c) color[i * 3 + c] = d.albedo[c];
  }
  FieldOutput out;
  out.sigma = DualArray(Shape{S, 1}, std::move(sigma));
  out.color = DualArray(Shape{S, 3}, std::move(color));
  out.offset = DualArray::zeros(Shape{S, 1});
  out.feature = DualArray::zeros(Shape{S, 0});
  return out;
}

Image oracle_render(const AnalyticScene& scene, const CameraPose& cam, std::size_t samples_per_ray) {
  if (samples_per_ray == 0) throw InvalidArgument("oracle_render: need at least one sample");
  const Intrinsics& in = cam.intrinsics;
  Image img(in.width, in.height);
  const double dt = (in.far - in.near) / static_cast<double>(samples_per_ray);
  for (int r = 0; r < in.height; ++r) {
    for (int c = 0; c < in.width; ++c) {
      const double x = (c + 0.5 - 0.5 * in.width) / in.focal;
      const double y = -(r + 0.5 - 0.5 * in.height) / in.focal;
      Vec3 d = cam.rotation.col(0) * x + cam.rotation.col(1) * y - cam.rotation.col(2);
      d /= d.norm();
      double trans = 1.0;
      Vec3 acc = Vec3::Zero();
      for (std::size_t k = 0; k < samples_per_ray; ++k) {
        const double t = in.near + (static_cast<double>(k) + 0.5) * dt;
        const DensitySample s = scene_density(scene, cam.position + t * d);
        if (s.sigma == 0.0) continue;
        const double absorbed = 1.0 - std::exp(-s.sigma * dt);
        acc += trans * absorbed * s.albedo;
        trans *= 1.0 - absorbed;
      }
      acc += trans * scene.background;
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = acc[ch];
    }
  }
  return img;
}

AnalyticScene one_sphere_scene() {
  AnalyticScene s;
  s.primitives.push_back({PrimitiveKind::Sphere, Vec3::Zero(), Vec3::Constant(0.8), 10.0, Vec3(0.85, 0.3, 0.2)});
  return s;
}

AnalyticScene two_primitive_scene() {
  AnalyticScene s;
  s.primitives.push_back(
      {PrimitiveKind::Sphere, Vec3(-0.5, -0.2, 0.0), Vec3::Constant(0.5), 10.0, Vec3(0.9, 0.25, 0.2)});
  s.primitives.push_back({PrimitiveKind::Box, Vec3(0.5, 0.3, 0.0), Vec3(0.35, 0.35, 0.45), 10.0, Vec3(0.2, 0.4, 0.85)});
  return s;
}

AnalyticScene cluster_scene() {
  AnalyticScene s;
  s.background = Vec3(0.9, 0.95, 1.0);
  s.primitives.push_back({PrimitiveKind::Box, Vec3(0.0, 0.0, -0.4), Vec3(0.8, 0.8, 0.15), 8.0, Vec3(0.6, 0.6, 0.55)});
  s.primitives.push_back({PrimitiveKind::Sphere, Vec3(0.2, 0.1, 0.1), Vec3::Constant(0.45), 4.0, Vec3(0.2, 0.8, 0.3)});
  s.primitives.push_back(
      {PrimitiveKind::Sphere, Vec3(-0.3, -0.2, 0.2), Vec3::Constant(0.3), 12.0, Vec3(0.95, 0.85, 0.1)});
  return s;
}

AnalyticScene parse_scene(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  AnalyticScene scene;
  scene.primitives.clear();
  auto fail = [&](const std::string& msg) {
    throw FormatError("scene line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof()) fail("expected numbers after '" + key + "'");
    auto expect = [&](std::size_t n) {
      if (v.size() != n) fail("'" + key + "' takes " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    };
    if (!header) {
      if (key != "wahscene") fail("missing 'wahscene' header");
      expect(1);
      if (v[0] != 1.0) fail("unsupported scene version");
      header = true;
    } else if (key == "background") {
      expect(3);
      scene.background = Vec3(v[0], v[1], v[2]);
    } else if (key == "bounds") {
      expect(2);
      scene.near = v[0];
      scene.far = v[1];
    } else if (key == "falloff") {
      expect(1);
      scene.falloff = v[0];
    } else if (key == "sphere") {
      expect(8);
      scene.primitives.push_back(
          {PrimitiveKind::Sphere, Vec3(v[0], v[1], v[2]), Vec3::Constant(v[3]), v[4], Vec3(v[5], v[6], v[7])});
    } else if (key == "box") {
      expect(10);
      scene.primitives.push_back(
          {PrimitiveKind::Box, Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), v[6], Vec3(v[7], v[8], v[9])});
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw FormatError("scene: empty description");
  try {
    scene.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("scene: ") + e.what());
  }
  return scene;
}

std::string format_scene(const AnalyticScene& scene) {
  std::ostringstream out;
  out.precision(17);
  auto vec = [&](const Vec3& v) { out << ' ' << v.x() << ' ' << v.y() << ' ' << v.z(); };
  out << "wahscene 1\nbackground";
  vec(scene.background);
  out << "\nbounds " << scene.near << ' ' << scene.far << "\nfalloff " << scene.falloff << '\n';
  for (const auto& p : scene.primitives) {
    out << (p.kind == PrimitiveKind::Sphere ? "sphere" : "box");
    vec(p.center);
    if (p.kind == PrimitiveKind::Sphere) {
      out << ' ' << p.size.x();
    } else {
      vec(p.size);
    }
    out << ' ' << p.density;
    vec(p.albedo);
    out << '\n';
  }
  return out.str();
}

AnalyticScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_scene(const std::string& path, const AnalyticScene& scene) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scene '" + path + "'");
  out << format_scene(scene);
  if (!out) throw IoError("failed writing scene '" + path + "'");
}

Dataset make_dataset(const AnalyticScene& scene, const DatasetSpec& spec, Rng& rng) {
  scene.validate();
  if (spec.resolution < 1) throw InvalidArgument("dataset resolution must be positive");
  Intrinsics in;
  in.width = in.height = spec.resolution;
  in.focal = spec.focal_scale * spec.resolution;
  in.near = scene.near;
  in.far = scene.far;

  PoseBounds hemisphere;
  hemisphere.radius = spec.radius;
  hemisphere.gamma_min = spec.gamma_min;
  PoseBounds train_bounds = hemisphere;
  if (spec.train_octant) train_bounds.phi_max = 0.5 * std::numbers::pi;

  Dataset data;
  auto add = [&](const PoseBounds& b, Split split) {
    DatasetView v;
    v.camera = pose_from_sphere(sample_unseen_pose(b, rng), in);
    v.image = oracle_render(scene, v.camera, spec.oracle_samples);
    v.split = split;
    data.push_back(std::move(v));
  };
  for (std::size_t i = 0; i < spec.n_train; ++i) add(train_bounds, Split::Train);
  for (std::size_t i = 0; i < spec.n_test; ++i) add(hemisphere, Split::Test);
  return data;
}

std::vector<const DatasetView*> views_of(const Dataset& data, Split split) {
  std::vector<const DatasetView*> out;
  for (const auto& v : data)
    if (v.split == split) out.push_back(&v);
  return out;
}

namespace {

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void load_split(const fs::path& dir, Split split, double near, double far, Dataset& out) {
  const fs::path manifest = dir / (std::string("transforms_") + split_name(split) + ".json");
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (!j.contains("camera_angle_x") || !j["camera_angle_x"].is_number()) {
    throw FormatError(manifest.string() + ": missing numeric camera_angle_x");
  }
  if (!j.contains("frames") || !j["frames"].is_array()) throw FormatError(manifest.string() + ": missing frames");
  const double angle = j["camera_angle_x"].get<double>();
  if (!(angle > 0.0 && angle < std::numbers::pi)) throw FormatError(manifest.string() + ": camera_angle_x out of range");

  const auto& frames = j["frames"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    auto fail = [&](const std::string& msg) {
      throw FormatError(manifest.string() + ": frame " + std::to_string(i) + ": " + msg);
    };
    if (!f.contains("file_path") || !f["file_path"].is_string()) fail("missing file_path");
    const auto& m = f.contains("transform_matrix") ? f["transform_matrix"] : nlohmann::json();
    if (!m.is_array() || m.size() != 4) fail("transform_matrix is not 4x4");
    Eigen::Matrix4d T;
    for (int r = 0; r < 4; ++r) {
      if (!m[r].is_array() || m[r].size() != 4) fail("transform_matrix is not 4x4");
      for (int c = 0; c < 4; ++c) {
        if (!m[r][c].is_number()) fail("transform_matrix has a non-numeric entry");
        T(r, c) = m[r][c].get<double>();
      }
    }
    if (!T.allFinite()) fail("transform_matrix has a non-finite entry");

    fs::path image = dir / f["file_path"].get<std::string>();
    if (!image.has_extension()) image += ".png";
    DatasetView v;
    try {
      v.image = read_png(image.string());
    } catch (const Error& e) {
      fail(e.what());
    }
    v.split = split;
    v.camera.position = T.block<3, 1>(0, 3);
    v.camera.rotation = T.block<3, 3>(0, 0);
    v.camera.intrinsics.width = v.image.width;
    v.camera.intrinsics.height = v.image.height;
    v.camera.intrinsics.focal = 0.5 * v.image.width / std::tan(0.5 * angle);
    v.camera.intrinsics.near = near;
    v.camera.intrinsics.far = far;
    out.push_back(std::move(v));
  }
}

}  // namespace

Dataset load_blender_format(const std::string& dir, double near, double far) {
  Dataset out;
  load_split(dir, Split::Train, near, far, out);
  if (fs::exists(fs::path(dir) / "transforms_test.json")) load_split(dir, Split::Test, near, far, out);
  return out;
}

void write_blender_format(const std::string& dir, const Dataset& data) {
  for (Split split : {Split::Train, Split::Test}) {
    const auto views = views_of(data, split);
    if (views.empty()) continue;
    const fs::path sub = fs::path(dir) / split_name(split);
    fs::create_directories(sub);
    const Intrinsics& in0 = views.front()->camera.intrinsics;
    nlohmann::json j;
    j["camera_angle_x"] = 2.0 * std::atan(0.5 * in0.width / in0.focal);
    j["frames"] = nlohmann::json::array();
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto& v = *views[i];
      if (v.camera.intrinsics.width != in0.width || v.camera.intrinsics.focal != in0.focal) {
        throw InvalidArgument("write_blender_format: views of one split must share intrinsics");
      }
      const std::string name = "r_" + std::to_string(i);
      write_png((sub / (name + ".png")).string(), v.image);
      nlohmann::json m = nlohmann::json::array();
      for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) {
          double x = r < 3 ? (c < 3 ? v.camera.rotation(r, c) : v.camera.position[r]) : (c == 3 ? 1.0 : 0.0);
          row.push_back(x);
        }
        m.push_back(row);
      }
      j["frames"].push_back({{"file_path", std::string("./") + split_name(split) + "/" + name}, {"transform_matrix", m}});
    }
    const fs::path manifest = fs::path(dir) / (std::string("transforms_") + split_name(split) + ".json");
    std::ofstream out(manifest);
    if (!out) throw IoError("cannot write '" + manifest.string() + "'");
    out << j.dump(2) << '\n';
  }
}

}  // namespace wah
