#include "wahnerf/field.hpp"

#include <cmath>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

std::string layer(int i, const char* part) { return "trunk." + std::to_string(i) + "." + part; }

std::map<std::string, Shape> expected_shapes(const LayerSpec& s) {
  if (s.pos_levels < 1 || s.dir_levels < 0 || s.trunk_depth < 1 || s.trunk_width < 1 || s.color_width < 1) {
    throw InvalidArgument("layer spec has a zero-width or empty layer");
  }
  const std::size_t W = static_cast<std::size_t>(s.trunk_width);
  const std::size_t C = static_cast<std::size_t>(s.color_width);
  std::map<std::string, Shape> shapes;
  for (int i = 0; i < s.trunk_depth; ++i) {
    shapes[layer(i, "w")] = {i == 0 ? s.pos_width() : W, W};
    shapes[layer(i, "b")] = {1, W};
    if (i == s.skip_layer && i > 0) shapes[layer(i, "w_skip")] = {s.pos_width(), W};
  }
  shapes["density.w"] = {W, 1};
  shapes["density.b"] = {1, 1};
  shapes["color.0.w_feat"] = {W, C};
  shapes["color.0.w_dir"] = {s.dir_width(), C};
  shapes["color.0.b"] = {1, C};
  shapes["color.1.w"] = {C, 3};
  shapes["color.1.b"] = {1, 3};
  shapes["offset.w"] = {W, 1};
  shapes["offset.b"] = {1, 1};
  return shapes;
}


}  // namespace

LayerSpec LayerSpec::full_scale() {
  LayerSpec s;
  s.trunk_depth = 8;
  s.trunk_width = 256;
  s.skip_layer = 4;
  s.color_width = 128;
  return s;
}

std::size_t FieldParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.values.size();
  return n;
}

void FieldParams::validate() const {
  const auto shapes = expected_shapes(spec);
  if (shapes.size() != tensors.size()) {
    throw InvalidArgument("field has " + std::to_string(tensors.size()) + " tensors, layer spec needs " +
                          std::to_string(shapes.size()));
  }
  for (const auto& [name, shape] : shapes) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InvalidArgument("field tensor '" + name + "' missing");
    if (it->second.shape != shape || it->second.values.size() != shape_size(shape)) {
      throw InvalidArgument("field tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                            ", expected " + shape_str(shape));
    }
  }
}

FieldParams zero_params(const LayerSpec& spec) {
  FieldParams p;
  p.spec = spec;
  for (const auto& [name, shape] : expected_shapes(spec)) {
    p.tensors[name] = ParamTensor{shape, std::vector<double>(shape_size(shape), 0.0)};
  }
  return p;
}

FieldParams init_params(const LayerSpec& spec, Rng& rng) {
  FieldParams p = zero_params(spec);
  // Skip weights share the fan-in of the layer they feed.
  auto fan_in = [&](const std::string& name) -> std::size_t {
    const auto dot = name.rfind('.');
    const std::string prefix = name.substr(0, dot);
    std::size_t n = 0;
    for (const auto& [other, t] : p.tensors) {
      if (other.compare(0, prefix.size() + 1, prefix + ".") == 0 && other.back() != 'b') n += t.shape[0];
    }
    return n;
  };
  for (auto& [name, t] : p.tensors) {
    if (name.rfind("offset.", 0) == 0) {
      std::fill(t.values.begin(), t.values.end(), kOffsetHeadInit);
      continue;
    }
    if (name.back() == 'b') continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in(name)));
    for (double& v : t.values) v = uniform(rng, -bound, bound);
  }
  return p;
}

const DualArray& FieldVars::operator[](const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw InvalidArgument("unknown field tensor '" + name + "'");
  return it->second;
}

FieldVars bind(const FieldParams& params, Tape* tape) {
  FieldVars v;
  v.spec = params.spec;
  for (const auto& [name, t] : params.tensors) {
    v.tensors.emplace(name, tape ? tape->variable(t.shape, t.values) : DualArray(t.shape, t.values));
  }
  return v;
}

FieldOutput field_forward(const FieldVars& p, const DualArray& pos_enc, const DualArray& dir_enc) {
  const LayerSpec& s = p.spec;
  if (pos_enc.shape().size() != 2 || pos_enc.cols() != s.pos_width()) {
    throw InvalidArgument("position encoding " + shape_str(pos_enc.shape()) + " does not match field input width " +
                          std::to_string(s.pos_width()));
  }
  if (dir_enc.shape().size() != 2 || dir_enc.cols() != s.dir_width() || dir_enc.rows() != pos_enc.rows()) {
    throw InvalidArgument("direction encoding " + shape_str(dir_enc.shape()) + " does not match field input " +
                          shape_str(pos_enc.shape()));
  }
  DualArray h = pos_enc;
  for (int i = 0; i < s.trunk_depth; ++i) {
    if (i == s.skip_layer && i > 0) {
      const DualArray skip = matmul(pos_enc, p[layer(i, "w_skip")]);
      h = affine(h, p[layer(i, "w")], p[layer(i, "b")], &skip, true);
    } else {
      h = affine(h, p[layer(i, "w")], p[layer(i, "b")], nullptr, true);
    }
  }
  FieldOutput out;
  out.feature = h;
  out.sigma = softplus(affine(h, p["density.w"], p["density.b"]));
  const DualArray from_dir = matmul(dir_enc, p["color.0.w_dir"]);
  const DualArray c0 = affine(h, p["color.0.w_feat"], p["color.0.b"], &from_dir, true);
  out.color = sigmoid(affine(c0, p["color.1.w"], p["color.1.b"]));
  out.offset = affine(h, p["offset.w"], p["offset.b"]);
  return out;
}

}  // namespace wah
