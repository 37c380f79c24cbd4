#include "wahnerf/training.hpp"

#include <cmath>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wahnerf/checkpoint.hpp"
#include "wahnerf/error.hpp"
#include "wahnerf/rendering.hpp"

namespace wah {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InvalidArgument(std::string("train config: ") + name + " must be positive");
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string("train config: ") + name + " must be non-negative");
  };
  positive(static_cast<double>(patch_size), "patch_size");
  positive(static_cast<double>(patches_per_batch), "patches_per_batch");
  positive(static_cast<double>(perturbations), "perturbations");
  positive(static_cast<double>(coarse_samples), "coarse_samples");
  positive(static_cast<double>(fine_samples), "fine_samples");
  positive(lr_start, "lr_start");
  positive(lr_end, "lr_end");
  positive(epsilon, "epsilon");
  positive(adam_eps, "adam_eps");
  non_negative(mu, "mu");
  non_negative(nu, "nu");
  non_negative(lambda, "lambda");
  non_negative(coarse_coef, "coarse_coef");
  non_negative(tau_radius, "tau_radius");
  non_negative(tau_phi, "tau_phi");
  non_negative(tau_gamma, "tau_gamma");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("train config: adam betas must lie in [0, 1)");
  }
  if (!(tau_radius < 1.0)) throw InvalidArgument("train config: tau_radius must be below 1");
  if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) {
    throw InvalidArgument("train config: mask_threshold must lie in [0, 1)");
  }
  const PoseBounds& b = unseen_bounds;
  if (!(b.radius > 0.0 && b.phi_min <= b.phi_max && b.gamma_min > 0.0 && b.gamma_min <= b.gamma_max &&
        b.gamma_max < std::numbers::pi)) {
    throw InvalidArgument("train config: unseen pose bounds are empty or leave (0, pi)");
  }
  if (uses_unseen() && unseen_patches == 0) throw InvalidArgument("train config: unseen branch needs patches");
}

void apply_train_config(KeyValues& kv, TrainConfig& c) {
  take(kv, "iterations", c.iterations);
  take(kv, "patch_size", c.patch_size);
  take(kv, "patches_per_batch", c.patches_per_batch);
  take(kv, "unseen_patches", c.unseen_patches);
  take(kv, "lr_start", c.lr_start);
  take(kv, "lr_end", c.lr_end);
  take(kv, "adam_beta1", c.adam_beta1);
  take(kv, "adam_beta2", c.adam_beta2);
  take(kv, "adam_eps", c.adam_eps);
  take(kv, "mu", c.mu);
  take(kv, "nu", c.nu);
  take(kv, "lambda", c.lambda);
  take(kv, "coarse_coef", c.coarse_coef);
  take(kv, "epsilon", c.epsilon);
  take(kv, "mask_threshold", c.mask_threshold);
  take(kv, "smooth", c.smooth);
  take(kv, "stop_grad_unseen", c.stop_grad_unseen);
  take(kv, "unseen_ramp", c.unseen_ramp);
  take(kv, "perturbations", c.perturbations);
  take(kv, "tau_radius", c.tau_radius);
  take(kv, "tau_phi", c.tau_phi);
  take(kv, "tau_gamma", c.tau_gamma);
  take(kv, "unseen_radius", c.unseen_bounds.radius);
  take(kv, "unseen_phi_min", c.unseen_bounds.phi_min);
  take(kv, "unseen_phi_max", c.unseen_bounds.phi_max);
  take(kv, "unseen_gamma_min", c.unseen_bounds.gamma_min);
  take(kv, "unseen_gamma_max", c.unseen_bounds.gamma_max);
  take(kv, "coarse_samples", c.coarse_samples);
  take(kv, "fine_samples", c.fine_samples);
  take(kv, "deformable", c.deformable);
  take(kv, "deformable_coarse", c.deformable_coarse);
  take(kv, "background_r", c.background.x());
  take(kv, "background_g", c.background.y());
  take(kv, "background_b", c.background.z());
  take(kv, "pos_levels", c.layers.pos_levels);
  take(kv, "dir_levels", c.layers.dir_levels);
  take(kv, "trunk_depth", c.layers.trunk_depth);
  take(kv, "trunk_width", c.layers.trunk_width);
  take(kv, "skip_layer", c.layers.skip_layer);
  take(kv, "color_width", c.layers.color_width);
  std::size_t seed = c.seed;
  if (take(kv, "seed", seed)) c.seed = seed;
  take(kv, "checkpoint_every", c.checkpoint_every);
}

KeyValues train_config_values(const TrainConfig& c) {
  KeyValues kv;
  auto num = [&](const char* k, double v) { kv[k] = format_double(v); };
  auto count = [&](const char* k, std::size_t v) { kv[k] = std::to_string(v); };
  auto flag = [&](const char* k, bool v) { kv[k] = v ? "true" : "false"; };
  count("iterations", c.iterations);
  count("patch_size", c.patch_size);
  count("patches_per_batch", c.patches_per_batch);
  count("unseen_patches", c.unseen_patches);
  num("lr_start", c.lr_start);
  num("lr_end", c.lr_end);
  num("adam_beta1", c.adam_beta1);
  num("adam_beta2", c.adam_beta2);
  num("adam_eps", c.adam_eps);
  num("mu", c.mu);
  num("nu", c.nu);
  num("lambda", c.lambda);
  num("coarse_coef", c.coarse_coef);
  num("epsilon", c.epsilon);
  num("mask_threshold", c.mask_threshold);
  flag("smooth", c.smooth);
  flag("stop_grad_unseen", c.stop_grad_unseen);
  count("unseen_ramp", c.unseen_ramp);
  count("perturbations", c.perturbations);
  num("tau_radius", c.tau_radius);
  num("tau_phi", c.tau_phi);
  num("tau_gamma", c.tau_gamma);
  num("unseen_radius", c.unseen_bounds.radius);
  num("unseen_phi_min", c.unseen_bounds.phi_min);
  num("unseen_phi_max", c.unseen_bounds.phi_max);
  num("unseen_gamma_min", c.unseen_bounds.gamma_min);
  num("unseen_gamma_max", c.unseen_bounds.gamma_max);
  count("coarse_samples", c.coarse_samples);
  count("fine_samples", c.fine_samples);
  flag("deformable", c.deformable);
  flag("deformable_coarse", c.deformable_coarse);
  num("background_r", c.background.x());
  num("background_g", c.background.y());
  num("background_b", c.background.z());
  kv["pos_levels"] = std::to_string(c.layers.pos_levels);
  kv["dir_levels"] = std::to_string(c.layers.dir_levels);
  kv["trunk_depth"] = std::to_string(c.layers.trunk_depth);
  kv["trunk_width"] = std::to_string(c.layers.trunk_width);
  kv["skip_layer"] = std::to_string(c.layers.skip_layer);
  kv["color_width"] = std::to_string(c.layers.color_width);
  kv["seed"] = std::to_string(c.seed);
  count("checkpoint_every", c.checkpoint_every);
  return kv;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.iterations) throw InvalidArgument("lr_at: step beyond the schedule");
  if (cfg.iterations == 0) return cfg.lr_start;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.iterations);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

SeenBatch assemble_seen_batch(const Dataset& data, const TrainConfig& cfg, Rng& rng) {
  const auto views = views_of(data, Split::Train);
  if (views.empty()) throw InvalidArgument("seen batch: dataset has no train views");
  const int ps = static_cast<int>(cfg.patch_size);
  for (const auto* v : views) {
    if (v->image.width < ps || v->image.height < ps) {
      throw InvalidArgument("seen batch: image smaller than the " + std::to_string(ps) + "x" + std::to_string(ps) +
                            " patch");
    }
  }
  SeenBatch b;
  b.rays.reserve(cfg.rays_per_batch());
  b.colors.reserve(cfg.rays_per_batch() * 3);
  for (std::size_t p = 0; p < cfg.patches_per_batch; ++p) {
    const DatasetView& v = *views[uniform_index(rng, views.size())];
    const int r0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(v.image.height - ps + 1)));
    const int c0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(v.image.width - ps + 1)));
    for (int i = 0; i < ps; ++i) {
      for (int j = 0; j < ps; ++j) {
        b.rays.push_back(pixel_cone(v.camera, r0 + i, c0 + j));
        for (int ch = 0; ch < 3; ++ch) b.colors.push_back(v.image.at(r0 + i, c0 + j, ch));
      }
    }
  }
  return b;
}

UnseenBatch assemble_unseen_batch(const TrainConfig& cfg, const Intrinsics& in, Rng& rng) {
  const int ps = static_cast<int>(cfg.patch_size);
  if (in.width < ps || in.height < ps) throw InvalidArgument("unseen batch: image smaller than the patch");
  UnseenBatch b;
  b.perturbed.resize(cfg.perturbations);
  TauRanges ranges;
  ranges.phi = cfg.tau_phi;
  ranges.gamma = cfg.tau_gamma;
  for (std::size_t p = 0; p < cfg.unseen_patches; ++p) {
    const SphericalPose pose = sample_unseen_pose(cfg.unseen_bounds, rng);
    ranges.radius = cfg.tau_radius * pose.radius;
    const PosePair pair = perturb_pose(pose, ranges, rng, cfg.perturbations);
    const CameraPose cam = pose_from_sphere(pair.unseen, in);
    std::vector<CameraPose> moved;
    for (const auto& s : pair.perturbed) moved.push_back(pose_from_sphere(s, in));
    const int r0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(in.height - ps + 1)));
    const int c0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(in.width - ps + 1)));
    for (int i = 0; i < ps; ++i) {
      for (int j = 0; j < ps; ++j) {
        b.unseen.push_back(pixel_cone(cam, r0 + i, c0 + j));
        for (std::size_t k = 0; k < moved.size(); ++k) b.perturbed[k].push_back(pixel_cone(moved[k], r0 + i, c0 + j));
      }
    }
  }
  return b;
}

TrainState init_state(const TrainConfig& cfg) {
  TrainState s;
  s.rng.seed(cfg.seed);
  s.params = init_params(cfg.layers, s.rng);
  for (const auto& [name, t] : s.params.tensors) {
    s.adam_m[name].assign(t.values.size(), 0.0);
    s.adam_v[name].assign(t.values.size(), 0.0);
  }
  return s;
}

namespace {

void offset_terms(PassLosses& L, const PassResult& p, const TrainConfig& cfg, double near, double far) {
  if (!p.deformed) return;
  MIConfig mi;
  mi.epsilon = cfg.epsilon;
  mi.mask_threshold = cfg.mask_threshold;
  L.mi = loss_mi(p.render.weights, p.offsets, mi);
  const double span = far - near;
  const DualArray s = (p.intervals.midpoints() - near) * (1.0 / span);
  const DualArray ds = p.intervals.widths() * (1.0 / span);
  L.dist = loss_dist(p.render.weights, s, ds);
  L.offset = loss_offset(L.mi, L.dist, cfg.lambda);
}

void unseen_terms(PassLosses& L, const PassResult& u, const std::vector<const PassResult*>& perturbed,
                  const TrainConfig& cfg, double ramp) {
  DualArray color = u.render.color, depth = u.render.depth;
  if (cfg.stop_grad_unseen) {
    color = detach(color);
    depth = detach(depth);
  }
  std::vector<DualArray> pc, pd;
  for (const auto* p : perturbed) {
    pc.push_back(p->render.color);
    pd.push_back(p->render.depth);
  }
  if (cfg.nu > 0.0) {
    const PpcLoss ppc = loss_ppc(color, depth, pc, pd, cfg.patch_size);
    L.ppc_rgb = ppc.rgb * ramp;
    L.ppc_d = ppc.depth * ramp;
  }
  if (cfg.smooth) {
    DualArray s = loss_smooth(u.render.depth, cfg.patch_size);
    for (const auto& d : pd) s = s + loss_smooth(d, cfg.patch_size);
    L.smooth = s * (ramp / static_cast<double>(1 + pd.size()));
  }
}

}  // namespace

Gradients compute_gradients(const FieldParams& params, const SeenBatch& seen, const UnseenBatch* unseen,
                            const TrainConfig& cfg, std::size_t step, Rng& rng) {
  if (seen.rays.empty() || seen.colors.size() != seen.rays.size() * 3) {
    throw InvalidArgument("compute_gradients: malformed seen batch");
  }
  Tape tape;
  const FieldVars vars = bind(params, &tape);
  const NeuralField field(vars);
  const double near = seen.rays.front().near, far = seen.rays.front().far;

  RenderConfig rc;
  rc.coarse_samples = cfg.coarse_samples;
  rc.fine_samples = cfg.fine_samples;
  rc.deformable = cfg.deformable;
  rc.deformable_coarse = cfg.deformable_coarse;
  rc.randomized = true;
  rc.background = cfg.background;

  PassLosses coarse, fine;
  const ConeRender sr = render_rays(field, seen.rays, rc, rng);
  const DualArray gt(Shape{seen.rays.size(), 3}, seen.colors);
  coarse.mse = loss_mse(sr.coarse.render.color, gt);
  fine.mse = loss_mse(sr.fine.render.color, gt);
  offset_terms(coarse, sr.coarse, cfg, near, far);
  offset_terms(fine, sr.fine, cfg, near, far);

  if (unseen && cfg.uses_unseen()) {
    if (unseen->perturbed.empty()) throw InvalidArgument("compute_gradients: unseen batch has no perturbations");
    RenderConfig uc = rc;
    uc.deformable = false;
    const ConeRender ur = render_rays(field, unseen->unseen, uc, rng);
    std::vector<ConeRender> pr;
    for (const auto& rays : unseen->perturbed) pr.push_back(render_rays(field, rays, uc, rng));
    const double ramp = cfg.unseen_ramp ? std::min(1.0, static_cast<double>(step) / cfg.unseen_ramp) : 1.0;
    std::vector<const PassResult*> pc, pf;
    for (const auto& p : pr) {
      pc.push_back(&p.coarse);
      pf.push_back(&p.fine);
    }
    unseen_terms(coarse, ur.coarse, pc, cfg, ramp);
    unseen_terms(fine, ur.fine, pf, cfg, ramp);
  }

  Gradients g;
  LossWeights w;
  w.mu = cfg.mu;
  w.nu = cfg.nu;
  w.coarse_coef = cfg.coarse_coef;
  const DualArray total = loss_total(coarse, fine, w, &g.losses);
  if (!std::isfinite(g.losses.total)) return g;
  tape.backward(total);
  for (const auto& [name, v] : vars.tensors) g.grads[name] = tape.grad(v);
  return g;
}

StepResult train_step(TrainState& state, const SeenBatch& seen, const UnseenBatch* unseen, const TrainConfig& cfg) {
  StepResult r;
  r.lr = lr_at(state.step, cfg);
  Rng rng = state.rng;
  Gradients g = compute_gradients(state.params, seen, unseen, cfg, state.step, rng);
  r.losses = g.losses;
  if (!std::isfinite(g.losses.total)) {
    r.diagnostic = "non-finite loss at step " + std::to_string(state.step);
    return r;
  }
  for (const auto& [name, grad] : g.grads) {
    for (double x : grad) {
      if (!std::isfinite(x)) {
        r.diagnostic = "non-finite gradient for '" + name + "' at step " + std::to_string(state.step);
        return r;
      }
    }
  }
  const double t = static_cast<double>(state.step + 1);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  for (auto& [name, tensor] : state.params.tensors) {
    const auto& grad = g.grads.at(name);
    auto& m = state.adam_m.at(name);
    auto& v = state.adam_v.at(name);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      tensor.values[i] -= r.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
  state.rng = rng;
  ++state.step;
  r.applied = true;
  return r;
}

StepResult train_iteration(TrainState& state, const Dataset& data, const TrainConfig& cfg) {
  const Rng saved = state.rng;
  const SeenBatch seen = assemble_seen_batch(data, cfg, state.rng);
  UnseenBatch unseen;
  if (cfg.uses_unseen()) {
    const auto views = views_of(data, Split::Train);
    unseen = assemble_unseen_batch(cfg, views.front()->camera.intrinsics, state.rng);
  }
  StepResult r = train_step(state, seen, cfg.uses_unseen() ? &unseen : nullptr, cfg);
  if (!r.applied) state.rng = saved;
  return r;
}

std::string log_header() { return "step,lr,mse_c,mse_f,mi_f,dist_f,offset_f,ppc_rgb_f,ppc_d_f,smooth_f,total"; }

std::string log_line(const LogRow& row) {
  const PassValues& f = row.losses.fine;
  std::string s = std::to_string(row.step);
  for (double v : {row.lr, row.losses.coarse.mse, f.mse, f.mi, f.dist, f.offset, f.ppc_rgb, f.ppc_d, f.smooth,
                   row.losses.total}) {
    s += ',' + format_double(v);
  }
  return s;
}

std::string checkpoint_name(std::size_t step) { return "ckpt_" + std::to_string(step) + ".wah"; }

std::vector<LogRow> train(const Dataset& data, const TrainConfig& cfg, TrainState& state, const TrainOutput& out) {
  cfg.validate();
  std::ofstream log;
  if (!out.dir.empty()) {
    fs::create_directories(out.dir);
    const fs::path path = fs::path(out.dir) / "train_log.csv";
    const bool resume = state.step > 0 && fs::exists(path);
    log.open(path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write '" + path.string() + "'");
    if (!resume) log << log_header() << '\n';
  }
  const std::size_t every = cfg.checkpoint_interval();
  std::vector<LogRow> rows;
  while (state.step < cfg.iterations) {
    const std::size_t step = state.step;
    const StepResult r = train_iteration(state, data, cfg);
    if (!r.applied) throw NumericError("training aborted: " + r.diagnostic);
    LogRow row{step, r.lr, r.losses};
    rows.push_back(row);
    if (log) log << log_line(row) << '\n' << std::flush;
    if (out.on_step) out.on_step(row);
    if (!out.dir.empty() && every > 0 && state.step % every == 0) {
      save_state((fs::path(out.dir) / checkpoint_name(state.step)).string(), state, cfg);
    }
  }
  return rows;
}

void save_state(const std::string& path, const TrainState& state, const TrainConfig& cfg) {
  Container c;
  put_field(c, state.params);
  for (const auto& [name, m] : state.adam_m) c.tensors["adam.m." + name] = {Shape{m.size()}, m};
  for (const auto& [name, v] : state.adam_v) c.tensors["adam.v." + name] = {Shape{v.size()}, v};
  c.strings["train.step"] = std::to_string(state.step);
  c.strings["train.rng"] = rng_state(state.rng);
  c.strings["train.config"] = format_key_values(train_config_values(cfg));
  write_container(path, c);
}

TrainState load_state(const std::string& path, TrainConfig* cfg) {
  const Container c = read_container(path);
  TrainState s;
  s.params = get_field(c);
  auto str = [&](const std::string& key) -> const std::string& {
    auto it = c.strings.find(key);
    if (it == c.strings.end()) throw FormatError(path + ": missing '" + key + "'");
    return it->second;
  };
  for (const auto& [name, t] : s.params.tensors) {
    for (const char* kind : {"adam.m.", "adam.v."}) {
      auto it = c.tensors.find(kind + name);
      if (it == c.tensors.end() || it->second.values.size() != t.values.size()) {
        throw FormatError(path + ": optimizer moment '" + std::string(kind) + name + "' missing or mis-sized");
      }
      (kind[5] == 'm' ? s.adam_m : s.adam_v)[name] = it->second.values;
    }
  }
  try {
    s.step = std::stoull(str("train.step"));
  } catch (const std::logic_error&) {
    throw FormatError(path + ": malformed train.step");
  }
  set_rng_state(s.rng, str("train.rng"));
  if (cfg) {
    KeyValues kv = parse_key_values(str("train.config"), path);
    apply_train_config(kv, *cfg);
    if (!kv.empty()) throw FormatError(path + ": unknown config key '" + kv.begin()->first + "'");
  }
  return s;
}

}  // namespace wah
