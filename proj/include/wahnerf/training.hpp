#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wahnerf/config.hpp"
#include "wahnerf/field.hpp"
#include "wahnerf/geometry.hpp"
#include "wahnerf/losses.hpp"
#include "wahnerf/random.hpp"
#include "wahnerf/scenes.hpp"

namespace wah {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t patch_size = 8;
  std::size_t patches_per_batch = 16;
  /// Unseen patches per step; each brings `perturbations` perturbed patches.
  std::size_t unseen_patches = 16;
  double lr_start = 1e-3;
  double lr_end = 5e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double mu = 0.5;
  double nu = 0.5;
  double lambda = 5e-3;
  double coarse_coef = 0.1;
  double epsilon = 5e-4;
  double mask_threshold = 1e-4;
  bool smooth = true;
  /// Detach the unseen render inside the patch loss.
  bool stop_grad_unseen = false;
  /// Steps over which the unseen-branch terms ramp linearly from 0 to full
  /// weight; 0 disables the ramp.
  std::size_t unseen_ramp = 0;

  std::size_t perturbations = 1;
  /// Radius half-width as a fraction of the camera distance.
  double tau_radius = 0.005;
  double tau_phi = 0.0087;
  double tau_gamma = 0.0087;
  PoseBounds unseen_bounds;

  std::size_t coarse_samples = 64;
  std::size_t fine_samples = 64;
  bool deformable = true;
  bool deformable_coarse = false;
  Vec3 background = Vec3::Ones();

  LayerSpec layers;
  std::uint64_t seed = 0;
  /// 0 means iterations / 4.
  std::size_t checkpoint_every = 0;

  std::size_t rays_per_batch() const { return patch_size * patch_size * patches_per_batch; }
  /// True when the unseen branch contributes to the loss at all.
  bool uses_unseen() const { return nu > 0.0 || smooth; }
  std::size_t checkpoint_interval() const { return checkpoint_every ? checkpoint_every : iterations / 4; }
  void validate() const;
};

/// Consumes every key it knows from `kv`; leftovers are the caller's business.
void apply_train_config(KeyValues& kv, TrainConfig& cfg);
KeyValues train_config_values(const TrainConfig& cfg);

/// lr_start * (lr_end / lr_start)^(step / iterations).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct SeenBatch {
  std::vector<ConeRay> rays;   // patch-major, row-major inside each patch
  std::vector<double> colors;  // rays.size() x 3
};

struct UnseenBatch {
  std::vector<ConeRay> unseen;
  /// perturbed[p] holds the rays of every patch under perturbation p, in the
  /// same pixel order as `unseen`.
  std::vector<std::vector<ConeRay>> perturbed;
};

/// Random PS x PS patches fully inside randomly chosen train views.
SeenBatch assemble_seen_batch(const Dataset& data, const TrainConfig& cfg, Rng& rng);

/// Fresh unseen poses, each with `perturbations` perturbed copies sharing its
/// patch footprint.
UnseenBatch assemble_unseen_batch(const TrainConfig& cfg, const Intrinsics& intrinsics, Rng& rng);

using Moments = std::map<std::string, std::vector<double>>;

struct TrainState {
  FieldParams params;
  Moments adam_m;
  Moments adam_v;
  std::size_t step = 0;
  Rng rng;
};

TrainState init_state(const TrainConfig& cfg);

struct Gradients {
  Moments grads;
  LossBreakdown losses;
};

/// Loss and parameter gradients for one step at `step` (which only sets the
/// ramp). Draws sampling jitter from `rng`.
Gradients compute_gradients(const FieldParams& params, const SeenBatch& seen, const UnseenBatch* unseen,
                            const TrainConfig& cfg, std::size_t step, Rng& rng);

struct StepResult {
  LossBreakdown losses;
  double lr = 0.0;
  bool applied = false;
  std::string diagnostic;  // why the step was rejected
};

/// One Adam update. A non-finite loss or gradient leaves `state` untouched.
StepResult train_step(TrainState& state, const SeenBatch& seen, const UnseenBatch* unseen, const TrainConfig& cfg);

/// Draws the batches from state.rng and takes one step. On rejection the
/// rng is rolled back too.
StepResult train_iteration(TrainState& state, const Dataset& data, const TrainConfig& cfg);

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown losses;
};

std::string log_header();
std::string log_line(const LogRow& row);

struct TrainOutput {
  /// Directory for train_log.csv and ckpt_<step>.wah; empty writes nothing.
  std::string dir;
  std::function<void(const LogRow&)> on_step;
};

/// Runs iterations from state.step up to cfg.iterations. Appends to an
/// existing log when resuming. Throws NumericError if a step is rejected.
std::vector<LogRow> train(const Dataset& data, const TrainConfig& cfg, TrainState& state,
                          const TrainOutput& out = {});

std::string checkpoint_name(std::size_t step);
void save_state(const std::string& path, const TrainState& state, const TrainConfig& cfg);
/// Restores params, moments, step and rng. The stored config is returned via
/// `cfg` when given.
TrainState load_state(const std::string& path, TrainConfig* cfg = nullptr);

}  // namespace wah
