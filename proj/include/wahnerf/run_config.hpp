#pragma once

#include "wahnerf/config.hpp"
#include "wahnerf/evaluation.hpp"
#include "wahnerf/scenes.hpp"
#include "wahnerf/training.hpp"

namespace wah {

/// Everything one config file can set. Keys without a prefix belong to the
/// trainer; `dataset.*` to dataset generation and loading; `render.*` to
/// inference, whose sample counts, deformation and background default to the
/// trainer's.
struct RunConfig {
  TrainConfig train;
  DatasetSpec dataset;
  double near = 2.0;  // dataset.near / dataset.far, used by the Blender loader
  double far = 6.0;
  RenderSettings render;
};

/// Rejects unknown keys and malformed values.
RunConfig run_config_from(const KeyValues& kv);
/// Full key set with every default filled in.
KeyValues run_config_values(const RunConfig& cfg);

}  // namespace wah
