#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "wahnerf/diffmath.hpp"
#include "wahnerf/random.hpp"

namespace wah {

/// Network shape. The trunk maps the integrated encoding to a feature vector;
/// the encoding is fed again at `skip_layer`. Density and offset read the
/// trunk feature only, color additionally reads the direction encoding.
struct LayerSpec {
  int pos_levels = 10;
  int dir_levels = 4;
  int trunk_depth = 4;
  int trunk_width = 64;
  int skip_layer = 2;  // negative: no skip
  int color_width = 32;

  std::size_t pos_width() const { return 6 * static_cast<std::size_t>(pos_levels); }
  std::size_t dir_width() const { return 3 + 6 * static_cast<std::size_t>(dir_levels); }

  /// 8 x 256 trunk, skip at 4, 128-wide color layer.
  static LayerSpec full_scale();
};

/// One named parameter tensor (row-major).
struct ParamTensor {
  Shape shape;
  std::vector<double> values;
};

/// Initial value of every offset-head weight and of its bias.
inline constexpr double kOffsetHeadInit = 1e-7;

/// Named parameters of the field. Names:
///   trunk.<i>.w / trunk.<i>.b, trunk.<skip>.w_skip,
///   density.w / density.b,
///   color.0.w_feat / color.0.w_dir / color.0.b, color.1.w / color.1.b,
///   offset.w / offset.b
struct FieldParams {
  LayerSpec spec;
  std::map<std::string, ParamTensor> tensors;

  std::size_t parameter_count() const;
  /// Throws unless every tensor has the shape `spec` implies.
  void validate() const;
};

/// Parameters lifted onto a tape (or held as constants for inference).
struct FieldVars {
  LayerSpec spec;
  std::map<std::string, DualArray> tensors;
  const DualArray& operator[](const std::string& name) const;
};

struct FieldOutput {
  DualArray sigma;    // S x 1, >= 0
  DualArray color;    // S x 3, in [0, 1]
  DualArray feature;  // S x trunk_width
  DualArray offset;   // S x 1
};

/// Fan-in scaled uniform weights (He), zero biases, and the offset head set
/// to kOffsetHeadInit exactly. Rejects zero-width layers.
FieldParams init_params(const LayerSpec& spec, Rng& rng);

/// All tensors of `spec`, zero-filled.
FieldParams zero_params(const LayerSpec& spec);

/// tape == nullptr binds the parameters as constants.
FieldVars bind(const FieldParams& params, Tape* tape);

/// sigma = softplus, color = sigmoid, offset = w_offset . feature + b_offset.
/// sigma and offset depend on pos_enc only.
FieldOutput field_forward(const FieldVars& params, const DualArray& pos_enc, const DualArray& dir_enc);

}  // namespace wah
