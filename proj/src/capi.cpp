#include "wahnerf/wahnerf.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "wahnerf/checkpoint.hpp"
#include "wahnerf/error.hpp"
#include "wahnerf/evaluation.hpp"
#include "wahnerf/run_config.hpp"
#include "wahnerf/scenes.hpp"
#include "wahnerf/training.hpp"

struct wah_config {
  wah::KeyValues values;
};

struct wah_scene {
  wah::AnalyticScene scene;
};

struct wah_dataset {
  wah::Dataset data;
};

struct wah_model {
  wah::TrainState state;
  wah::RunConfig config;
};

namespace {

thread_local std::string last_error;

template <typename F>
wah_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return WAH_OK;
  } catch (const wah::InvalidArgument& e) {
    last_error = e.what();
    return WAH_ERR_INVALID_ARGUMENT;
  } catch (const wah::IoError& e) {
    last_error = e.what();
    return WAH_ERR_IO;
  } catch (const wah::FormatError& e) {
    last_error = e.what();
    return WAH_ERR_FORMAT;
  } catch (const wah::NumericError& e) {
    last_error = e.what();
    return WAH_ERR_NUMERIC;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return WAH_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return WAH_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return WAH_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw wah::InvalidArgument(std::string(name) + " is NULL");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw wah::IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw wah::IoError("failed writing '" + path.string() + "'");
}

const wah::DatasetView& view_at(const wah_dataset* data, wah_split split, std::size_t index) {
  const auto views = wah::views_of(data->data, split == WAH_SPLIT_TRAIN ? wah::Split::Train : wah::Split::Test);
  if (index >= views.size()) {
    throw wah::InvalidArgument("view " + std::to_string(index) + " out of range (" + std::to_string(views.size()) +
                               " views)");
  }
  return *views[index];
}

}  // namespace

extern "C" {

WAH_API const char* wah_last_error(void) { return last_error.c_str(); }

WAH_API const char* wah_status_name(wah_status status) {
  switch (status) {
    case WAH_OK: return "ok";
    case WAH_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case WAH_ERR_IO: return "io";
    case WAH_ERR_FORMAT: return "format";
    case WAH_ERR_NUMERIC: return "numeric";
    case WAH_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

WAH_API wah_status wah_config_new(wah_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new wah_config{};
  });
}

WAH_API wah_status wah_config_load(const char* path, wah_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    wah::KeyValues kv = wah::load_key_values(path);
    wah::run_config_from(kv);
    *out = new wah_config{std::move(kv)};
  });
}

WAH_API wah_status wah_config_parse(const char* text, wah_config** out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    wah::KeyValues kv = wah::parse_key_values(text);
    wah::run_config_from(kv);
    *out = new wah_config{std::move(kv)};
  });
}

WAH_API wah_status wah_config_set(wah_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    wah::KeyValues kv = cfg->values;
    kv[key] = value;
    wah::run_config_from(kv);
    cfg->values = std::move(kv);
  });
}

WAH_API wah_status wah_config_dump(const wah_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(cfg, "cfg");
    const std::string text = wah::format_key_values(wah::run_config_values(wah::run_config_from(cfg->values)));
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

WAH_API void wah_config_free(wah_config* cfg) { delete cfg; }

WAH_API wah_status wah_scene_preset(const char* name, wah_scene** out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    const std::string n = name;
    wah::AnalyticScene s;
    if (n == "one-sphere") {
      s = wah::one_sphere_scene();
    } else if (n == "two-primitive") {
      s = wah::two_primitive_scene();
    } else if (n == "cluster") {
      s = wah::cluster_scene();
    } else {
      throw wah::InvalidArgument("unknown scene preset '" + n + "'");
    }
    *out = new wah_scene{std::move(s)};
  });
}

WAH_API wah_status wah_scene_load(const char* path, wah_scene** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wah_scene{wah::load_scene(path)};
  });
}

WAH_API wah_status wah_scene_save(const wah_scene* scene, const char* path) {
  return guard([&] {
    require(scene, "scene");
    require(path, "path");
    wah::save_scene(path, scene->scene);
  });
}

WAH_API void wah_scene_free(wah_scene* scene) { delete scene; }

WAH_API wah_status wah_dataset_generate(const wah_scene* scene, const wah_config* cfg, uint64_t seed,
                                        wah_dataset** out) {
  return guard([&] {
    require(scene, "scene");
    require(cfg, "cfg");
    require(out, "out");
    const wah::RunConfig rc = wah::run_config_from(cfg->values);
    wah::Rng rng(seed);
    *out = new wah_dataset{wah::make_dataset(scene->scene, rc.dataset, rng)};
  });
}

WAH_API wah_status wah_dataset_load(const char* dir, const wah_config* cfg, wah_dataset** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    wah::RunConfig rc;
    if (cfg) rc = wah::run_config_from(cfg->values);
    *out = new wah_dataset{wah::load_blender_format(dir, rc.near, rc.far)};
  });
}

WAH_API wah_status wah_dataset_save(const wah_dataset* data, const char* dir) {
  return guard([&] {
    require(data, "data");
    require(dir, "dir");
    wah::write_blender_format(dir, data->data);
  });
}

WAH_API wah_status wah_dataset_count(const wah_dataset* data, wah_split split, size_t* out) {
  return guard([&] {
    require(data, "data");
    require(out, "out");
    *out = wah::views_of(data->data, split == WAH_SPLIT_TRAIN ? wah::Split::Train : wah::Split::Test).size();
  });
}

WAH_API void wah_dataset_free(wah_dataset* data) { delete data; }

WAH_API wah_status wah_model_init(const wah_config* cfg, wah_model** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    auto m = std::make_unique<wah_model>();
    m->config = wah::run_config_from(cfg->values);
    m->state = wah::init_state(m->config.train);
    *out = m.release();
  });
}

WAH_API wah_status wah_model_load(const char* path, const wah_config* cfg, wah_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    wah::TrainConfig stored;
    wah::TrainState state = wah::load_state(path, &stored);
    wah::RunConfig rc;
    if (cfg) {
      rc = wah::run_config_from(cfg->values);
      if (wah::to_string(rc.train.layers) != wah::to_string(state.params.spec)) {
        throw wah::InvalidArgument("config layer spec differs from the checkpoint's");
      }
    } else {
      rc = wah::run_config_from(wah::train_config_values(stored));
    }
    *out = new wah_model{std::move(state), rc};
  });
}

WAH_API wah_status wah_model_save(const wah_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    wah::save_state(path, model->state, model->config.train);
  });
}

WAH_API wah_status wah_model_step(const wah_model* model, size_t* out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = model->state.step;
  });
}

WAH_API void wah_model_free(wah_model* model) { delete model; }

WAH_API wah_status wah_train(wah_model* model, const wah_dataset* data, const char* out_dir, double* last_total) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    wah::TrainOutput out;
    if (out_dir) out.dir = out_dir;
    const auto rows = wah::train(data->data, model->config.train, model->state, out);
    if (last_total) *last_total = rows.empty() ? std::nan("") : rows.back().losses.total;
  });
}

WAH_API wah_status wah_render_view(const wah_model* model, const wah_dataset* data, wah_split split, size_t index,
                                   const char* png_path) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    require(png_path, "png_path");
    const auto& v = view_at(data, split, index);
    wah::write_png(png_path, wah::render_image(model->state.params, v.camera, model->config.render));
  });
}

WAH_API wah_status wah_render_pose(const wah_model* model, const wah_dataset* data, double radius, double phi,
                                   double gamma, const char* png_path) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    require(png_path, "png_path");
    const auto& ref = view_at(data, WAH_SPLIT_TRAIN, 0);
    wah::SphericalPose s;
    s.radius = radius;
    s.phi = phi;
    s.gamma = gamma;
    const wah::CameraPose cam = wah::pose_from_sphere(s, ref.camera.intrinsics);
    wah::write_png(png_path, wah::render_image(model->state.params, cam, model->config.render));
  });
}

WAH_API wah_status wah_evaluate(const wah_model* model, const wah_dataset* data, const char* out_dir,
                                double* psnr_mean, double* ssim_mean) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    require(out_dir, "out_dir");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto views = wah::views_of(data->data, wah::Split::Test);
    if (views.empty()) throw wah::InvalidArgument("dataset has no test views");
    std::vector<wah::ViewMetric> metrics;
    for (std::size_t i = 0; i < views.size(); ++i) {
      const wah::Image img = wah::render_image(model->state.params, views[i]->camera, model->config.render);
      wah::write_png((fs::path(out_dir) / ("test_" + std::to_string(i) + ".png")).string(), img);
      metrics.push_back({std::to_string(i), wah::psnr(img, views[i]->image), wah::ssim(img, views[i]->image)});
    }
    const wah::MetricReport report = wah::make_report(std::move(metrics));
    write_text(fs::path(out_dir) / "report.txt", report.text());
    write_text(fs::path(out_dir) / "report.csv", report.csv());
    if (psnr_mean) *psnr_mean = report.psnr_mean;
    if (ssim_mean) *ssim_mean = report.ssim_mean;
  });
}

WAH_API wah_status wah_diagnose(const wah_model* model, const wah_dataset* data, size_t n_rays, uint64_t seed,
                                const char* out_dir, double* median_fine_spread) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    require(out_dir, "out_dir");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    wah::Rng rng(seed);
    const auto profiles = wah::diagnose_rays(model->state.params, data->data, n_rays, model->config.render, rng);
    write_text(fs::path(out_dir) / "profiles.csv", wah::profiles_csv(profiles));
    write_text(fs::path(out_dir) / "spreads.csv", wah::spreads_csv(profiles));
    if (median_fine_spread) *median_fine_spread = wah::median_spread(profiles, 1);
  });
}

WAH_API wah_status wah_image_metrics(const char* png_a, const char* png_b, double* psnr, int* capped, double* ssim) {
  return guard([&] {
    require(png_a, "png_a");
    require(png_b, "png_b");
    const wah::Image a = wah::read_png(png_a);
    const wah::Image b = wah::read_png(png_b);
    const wah::Psnr p = wah::psnr(a, b);
    const double s = wah::ssim(a, b);
    if (psnr) *psnr = p.db;
    if (capped) *capped = p.capped ? 1 : 0;
    if (ssim) *ssim = s;
  });
}

}  // extern "C"
