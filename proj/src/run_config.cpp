#include "wahnerf/run_config.hpp"

#include "wahnerf/error.hpp"

namespace wah {

RunConfig run_config_from(const KeyValues& input) {
  KeyValues kv = input;
  RunConfig c;
  apply_train_config(kv, c.train);
  take(kv, "dataset.n_train", c.dataset.n_train);
  take(kv, "dataset.n_test", c.dataset.n_test);
  take(kv, "dataset.resolution", c.dataset.resolution);
  take(kv, "dataset.focal_scale", c.dataset.focal_scale);
  take(kv, "dataset.radius", c.dataset.radius);
  take(kv, "dataset.train_octant", c.dataset.train_octant);
  take(kv, "dataset.gamma_min", c.dataset.gamma_min);
  take(kv, "dataset.oracle_samples", c.dataset.oracle_samples);
  take(kv, "dataset.near", c.near);
  take(kv, "dataset.far", c.far);

  c.render.coarse_samples = c.train.coarse_samples;
  c.render.fine_samples = c.train.fine_samples;
  c.render.deformable = c.train.deformable;
  c.render.background = c.train.background;
  take(kv, "render.coarse_samples", c.render.coarse_samples);
  take(kv, "render.fine_samples", c.render.fine_samples);
  take(kv, "render.deformable", c.render.deformable);
  take(kv, "render.chunk", c.render.chunk);
  if (!kv.empty()) throw FormatError("unknown config key '" + kv.begin()->first + "'");
  c.train.validate();
  if (!(c.near > 0.0 && c.near < c.far)) throw InvalidArgument("config: need 0 < dataset.near < dataset.far");
  return c;
}

KeyValues run_config_values(const RunConfig& c) {
  KeyValues kv = train_config_values(c.train);
  kv["dataset.n_train"] = std::to_string(c.dataset.n_train);
  kv["dataset.n_test"] = std::to_string(c.dataset.n_test);
  kv["dataset.resolution"] = std::to_string(c.dataset.resolution);
  kv["dataset.focal_scale"] = format_double(c.dataset.focal_scale);
  kv["dataset.radius"] = format_double(c.dataset.radius);
  kv["dataset.train_octant"] = c.dataset.train_octant ? "true" : "false";
  kv["dataset.gamma_min"] = format_double(c.dataset.gamma_min);
  kv["dataset.oracle_samples"] = std::to_string(c.dataset.oracle_samples);
  kv["dataset.near"] = format_double(c.near);
  kv["dataset.far"] = format_double(c.far);
  kv["render.coarse_samples"] = std::to_string(c.render.coarse_samples);
  kv["render.fine_samples"] = std::to_string(c.render.fine_samples);
  kv["render.deformable"] = c.render.deformable ? "true" : "false";
  kv["render.chunk"] = std::to_string(c.render.chunk);
  return kv;
}

}  // namespace wah
