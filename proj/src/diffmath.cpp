#include "wahnerf/diffmath.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wah {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

// Eigen chooses vectorised paths from operand addresses, so products run on
// owned (always aligned) copies. Otherwise results would depend on where the
// heap placed a buffer and identical runs could differ in the last bit.
RowMatrix owned(const DualArray& a, std::size_t rows, std::size_t cols) {
  return ConstMap(a.values().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void accumulate(std::vector<double>& dst, const RowMatrix& src) {
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s[i];
}

Tape* common_tape(const DualArray& a, const DualArray& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape()) {
    throw InvalidArgument("operands belong to different tapes");
  }
  return a.tape() ? a.tape() : b.tape();
}

Tape* common_tape(const std::vector<DualArray>& parts) {
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape()) continue;
    if (tape && p.tape() != tape) throw InvalidArgument("operands belong to different tapes");
    tape = p.tape();
  }
  return tape;
}

DualArray make_result(Tape* tape, Shape shape, std::vector<double> values, Tape::Backward bw) {
  if (!tape) return DualArray(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), std::move(bw));
}

void check_finite_input(const DualArray& a, const char* op, bool allow_zero) {
  for (double v : a.values()) {
    if (v < 0.0 || (!allow_zero && v == 0.0)) {
      std::ostringstream os;
      os << op << " of " << (v < 0.0 ? "negative" : "zero") << " input " << v;
      throw InvalidArgument(os.str());
    }
  }
}

// Elementwise op whose local derivative is computed in the forward pass.
template <class Fn>
DualArray unary(const DualArray& a, Fn fn) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  std::vector<double> deriv(a.is_constant() ? 0 : n);
  const auto x = a.values();
  if (a.is_constant()) {
    double unused;
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(x[i], unused);
    return DualArray(a.shape(), std::move(out));
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(x[i], deriv[i]);
  const std::size_t parent = a.node();
  return a.tape()->record(a.shape(), std::move(out),
                          [parent, d = std::move(deriv)](std::span<const double> g, Tape& t) {
                            auto& ga = t.grad_buffer(parent);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d[i];
                          });
}

Shape broadcast_shape(const DualArray& a, const DualArray& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  std::ostringstream os;
  os << op << ": shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape());
  throw InvalidArgument(os.str());
}

// Adds g * d into a parent that may have been broadcast from one element.
void accumulate(Tape& t, const DualArray& p, std::span<const double> g, const std::vector<double>& d) {
  auto& gp = t.grad_buffer(p.node());
  if (gp.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * d[i];
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * d[i];
    gp[0] += s;
  }
}

// Elementwise binary op; fn(x, y, dx, dy) returns the value and writes the
// partial derivatives.
template <class Fn>
DualArray binary(const DualArray& a, const DualArray& b, const char* name, Fn fn) {
  Tape* tape = common_tape(a, b);
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_size(shape);
  const auto x = a.values();
  const auto y = b.values();
  const bool sa = a.size() == 1 && n != 1;
  const bool sb = b.size() == 1 && n != 1;
  std::vector<double> out(n);
  const bool need_a = tape && !a.is_constant();
  const bool need_b = tape && !b.is_constant();
  std::vector<double> da(need_a ? n : 0), db(need_b ? n : 0);
  double ua, ub;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fn(x[sa ? 0 : i], y[sb ? 0 : i], need_a ? da[i] : ua, need_b ? db[i] : ub);
  }
  if (!tape) return DualArray(std::move(shape), std::move(out));
  return tape->record(std::move(shape), std::move(out),
                      [a, b, need_a, need_b, da = std::move(da), db = std::move(db)](
                          std::span<const double> g, Tape& t) {
                        if (need_a) accumulate(t, a, g, da);
                        if (need_b) accumulate(t, b, g, db);
                      });
}

void require_matrix(const DualArray& a, const char* op) {
  if (a.shape().size() != 2) {
    std::ostringstream os;
    os << op << ": expected a 2-D array, got " << shape_str(a.shape());
    throw InvalidArgument(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DualArray::DualArray(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_size(shape_) != values.size()) {
    std::ostringstream os;
    os << "shape " << shape_str(shape_) << " does not hold " << values.size() << " values";
    throw InvalidArgument(os.str());
  }
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

DualArray DualArray::full(Shape shape, double v) {
  const std::size_t n = shape_size(shape);
  return DualArray(std::move(shape), std::vector<double>(n, v));
}

DualArray DualArray::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return DualArray(Shape{n, 1}, std::move(values));
}

std::size_t DualArray::rows() const {
  if (shape_.empty()) return 1;
  return size() / shape_.back();
}

std::size_t DualArray::cols() const { return shape_.empty() ? 1 : shape_.back(); }

double DualArray::item() const {
  if (size() != 1) throw InvalidArgument("item() on array of shape " + shape_str(shape_));
  return (*values_)[0];
}

// ---------------------------------------------------------------------------

DualArray Tape::variable(Shape shape, std::vector<double> values) {
  return record(std::move(shape), std::move(values), nullptr);
}

DualArray Tape::variable(const DualArray& value) {
  DualArray out = value;
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back(Node{value.size(), {}, nullptr});
  return out;
}

DualArray Tape::record(Shape shape, std::vector<double> values, Backward backward) {
  DualArray out(std::move(shape), std::move(values));
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back(Node{out.size(), {}, std::move(backward)});
  return out;
}

std::vector<double>& Tape::grad_buffer(std::size_t node) {
  auto& n = nodes_[node];
  if (n.grad.empty()) n.grad.assign(n.size, 0.0);
  return n.grad;
}

void Tape::backward(const DualArray& output) {
  if (output.tape() != this) throw InvalidArgument("backward() on an array from another tape");
  if (output.size() != 1) {
    throw InvalidArgument("backward() needs a scalar output, got " + shape_str(output.shape()));
  }
  for (auto& n : nodes_) {
    n.grad.clear();
    n.grad.shrink_to_fit();
  }
  grad_buffer(output.node())[0] = 1.0;
  for (std::size_t i = output.node() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    // Parents always have smaller indices, so this node's buffer is final and
    // stays put while parents grow theirs.
    n.backward(n.grad, *this);
  }
}

std::vector<double> Tape::grad(const DualArray& x) const {
  if (x.tape() != this || x.node() >= nodes_.size() || nodes_[x.node()].grad.empty()) {
    return std::vector<double>(x.size(), 0.0);
  }
  return nodes_[x.node()].grad;
}

void Tape::reset() { nodes_.clear(); }

// ---------------------------------------------------------------------------

DualArray add(const DualArray& a, const DualArray& b) {
  return binary(a, b, "add", [](double x, double y, double& dx, double& dy) {
    dx = 1.0;
    dy = 1.0;
    return x + y;
  });
}

DualArray sub(const DualArray& a, const DualArray& b) {
  return binary(a, b, "sub", [](double x, double y, double& dx, double& dy) {
    dx = 1.0;
    dy = -1.0;
    return x - y;
  });
}

DualArray mul(const DualArray& a, const DualArray& b) {
  return binary(a, b, "mul", [](double x, double y, double& dx, double& dy) {
    dx = y;
    dy = x;
    return x * y;
  });
}

DualArray div(const DualArray& a, const DualArray& b) {
  return binary(a, b, "div", [](double x, double y, double& dx, double& dy) {
    const double q = x / y;
    dx = 1.0 / y;
    dy = -q / y;
    return q;
  });
}

DualArray neg(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = -1.0;
    return -x;
  });
}

DualArray exp(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = std::exp(x);
    return d;
  });
}

DualArray log(const DualArray& a) {
  check_finite_input(a, "log", false);
  return unary(a, [](double x, double& d) {
    d = 1.0 / x;
    return std::log(x);
  });
}

DualArray sin(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = std::cos(x);
    return std::sin(x);
  });
}

DualArray cos(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = -std::sin(x);
    return std::cos(x);
  });
}

DualArray sqrt(const DualArray& a) {
  check_finite_input(a, "sqrt", true);
  return unary(a, [](double x, double& d) {
    const double y = std::sqrt(x);
    d = 0.5 / y;
    return y;
  });
}

DualArray pow(const DualArray& a, double exponent) {
  return unary(a, [exponent](double x, double& d) {
    d = exponent * std::pow(x, exponent - 1.0);
    return std::pow(x, exponent);
  });
}

DualArray square(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = 2.0 * x;
    return x * x;
  });
}

DualArray softplus(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = 1.0 / (1.0 + std::exp(-x));
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
}

DualArray sigmoid(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    d = s * (1.0 - s);
    return s;
  });
}

DualArray relu(const DualArray& a) {
  return unary(a, [](double x, double& d) {
    d = x > 0.0 ? 1.0 : 0.0;
    return x > 0.0 ? x : 0.0;
  });
}

DualArray maximum(const DualArray& a, const DualArray& b) {
  return binary(a, b, "maximum", [](double x, double y, double& dx, double& dy) {
    const bool pick_a = x >= y;
    dx = pick_a ? 1.0 : 0.0;
    dy = pick_a ? 0.0 : 1.0;
    return pick_a ? x : y;
  });
}

DualArray minimum(const DualArray& a, const DualArray& b) {
  return binary(a, b, "minimum", [](double x, double y, double& dx, double& dy) {
    const bool pick_a = x <= y;
    dx = pick_a ? 1.0 : 0.0;
    dy = pick_a ? 0.0 : 1.0;
    return pick_a ? x : y;
  });
}

DualArray clamp(const DualArray& a, double lo, double hi) {
  if (lo > hi) throw InvalidArgument("clamp: empty interval");
  return unary(a, [lo, hi](double x, double& d) {
    d = (x >= lo && x <= hi) ? 1.0 : 0.0;
    return std::clamp(x, lo, hi);
  });
}

DualArray matmul(const DualArray& a, const DualArray& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw InvalidArgument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
  Tape* tape = common_tape(a, b);
  const RowMatrix product = owned(a, n, k) * owned(b, k, m);
  std::vector<double> out(product.data(), product.data() + n * m);
  return make_result(tape, Shape{n, m}, std::move(out), [a, b, n, k, m](std::span<const double> g, Tape& t) {
    const RowMatrix G = ConstMap(g.data(), n, m);
    if (!a.is_constant()) accumulate(t.grad_buffer(a.node()), G * owned(b, k, m).transpose());
    if (!b.is_constant()) accumulate(t.grad_buffer(b.node()), owned(a, n, k).transpose() * G);
  });
}

DualArray affine(const DualArray& x, const DualArray& w, const DualArray& b, const DualArray* addend,
                 bool apply_relu) {
  require_matrix(x, "affine");
  require_matrix(w, "affine");
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  if (w.shape()[0] != k || b.shape() != Shape{1, m} || (addend && addend->shape() != Shape{n, m})) {
    throw InvalidArgument("affine: shape mismatch " + shape_str(x.shape()) + " * " + shape_str(w.shape()) + " + " +
                          shape_str(b.shape()) + (addend ? " + " + shape_str(addend->shape()) : std::string()));
  }
  std::vector<DualArray> parts{x, w, b};
  if (addend) parts.push_back(*addend);
  Tape* tape = common_tape(parts);

  RowMatrix Y = owned(x, n, k) * owned(w, k, m);
  Y.rowwise() += owned(b, 1, m).row(0);
  if (addend) Y += owned(*addend, n, m);
  std::vector<double> out(Y.data(), Y.data() + n * m);
  std::vector<unsigned char> active;
  if (apply_relu) {
    if (tape) active.resize(n * m);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const bool on = out[i] > 0.0;
      if (tape) active[i] = on;
      if (!on) out[i] = 0.0;
    }
  }
  const DualArray extra = addend ? *addend : DualArray();
  const bool has_extra = addend != nullptr;
  return make_result(tape, Shape{n, m}, std::move(out),
                     [x, w, b, extra, has_extra, n, k, m, active = std::move(active)](std::span<const double> g,
                                                                                      Tape& t) {
                       RowMatrix G = ConstMap(g.data(), n, m);
                       if (!active.empty()) {
                         for (std::size_t i = 0; i < active.size(); ++i)
                           if (!active[i]) G.data()[i] = 0.0;
                       }
                       if (!x.is_constant()) accumulate(t.grad_buffer(x.node()), G * owned(w, k, m).transpose());
                       if (!w.is_constant()) accumulate(t.grad_buffer(w.node()), owned(x, n, k).transpose() * G);
                       if (!b.is_constant()) accumulate(t.grad_buffer(b.node()), G.colwise().sum());
                       if (has_extra && !extra.is_constant()) accumulate(t.grad_buffer(extra.node()), G);
                     });
}

DualArray sum(const DualArray& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result(a.tape(), Shape{}, {s}, [a](std::span<const double> g, Tape& t) {
    auto& ga = t.grad_buffer(a.node());
    for (double& v : ga) v += g[0];
  });
}

DualArray mean(const DualArray& a) { return sum(a) * (1.0 / static_cast<double>(a.size())); }

DualArray row_sum(const DualArray& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
    out[r] = s;
  }
  return make_result(a.tape(), Shape{rows, 1}, std::move(out), [a, rows, cols](std::span<const double> g, Tape& t) {
    auto& ga = t.grad_buffer(a.node());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
  });
}

DualArray row_mean(const DualArray& a) { return row_sum(a) * (1.0 / static_cast<double>(a.cols())); }

DualArray cumsum(const DualArray& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      s += x[r * cols + c];
      out[r * cols + c] = s;
    }
  }
  return make_result(a.tape(), a.shape(), std::move(out), [a, rows, cols](std::span<const double> g, Tape& t) {
    auto& ga = t.grad_buffer(a.node());
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = cols; c-- > 0;) {
        s += g[r * cols + c];
        ga[r * cols + c] += s;
      }
    }
  });
}

DualArray gather(const DualArray& a, std::span<const std::size_t> index, std::size_t k) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const bool per_row = index.size() == rows * k;
  if (!per_row && index.size() != k) {
    throw InvalidArgument("gather: index of length " + std::to_string(index.size()) +
                          " does not match " + std::to_string(k) + " columns per row of " +
                          shape_str(a.shape()));
  }
  for (std::size_t i : index) {
    if (i >= cols) throw InvalidArgument("gather: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto x = a.values();
  std::vector<double> out(rows * k);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = x[r * cols + idx[per_row ? r * k + j : j]];
  Shape shape = a.shape().empty() ? Shape{k} : a.shape();
  shape.back() = k;
  return make_result(a.tape(), std::move(shape), std::move(out),
                     [a, rows, cols, k, per_row, idx = std::move(idx)](std::span<const double> g, Tape& t) {
                       auto& ga = t.grad_buffer(a.node());
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < k; ++j)
                           ga[r * cols + idx[per_row ? r * k + j : j]] += g[r * k + j];
                     });
}

DualArray reshape(const DualArray& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw InvalidArgument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(a.tape(), std::move(shape), std::move(out), [a](std::span<const double> g, Tape& t) {
    auto& ga = t.grad_buffer(a.node());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

DualArray concat_cols(const std::vector<DualArray>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw InvalidArgument("concat_cols: shape mismatch " + shape_str(parts.front().shape()) + " vs " +
                            shape_str(p.shape()));
    }
    total += p.cols();
  }
  Tape* tape = common_tape(parts);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto x = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(x.begin() + r * c, c, out.begin() + r * total + offset);
    offset += c;
  }
  return make_result(tape, Shape{rows, total}, std::move(out), [parts, rows, total](std::span<const double> g, Tape& t) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t c = p.cols();
      if (!p.is_constant()) {
        auto& gp = t.grad_buffer(p.node());
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + offset + j];
      }
      offset += c;
    }
  });
}

DualArray detach(const DualArray& a) {
  DualArray out(a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
  return out;
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<DualArray(const DualArray&)>& f, const DualArray& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("grad_check: step must be positive");
  Tape tape;
  const DualArray xv = tape.variable(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  const DualArray y = f(xv);
  if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite forward value");
  if (y.is_constant()) throw InvalidArgument("grad_check: f does not depend on its input");
  tape.backward(y);
  const std::vector<double> analytic = tape.grad(xv);

  std::vector<double> probe(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double fp = f(DualArray(x.shape(), probe)).item();
    probe[i] = x0 - h;
    const double fm = f(DualArray(x.shape(), probe)).item();
    probe[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite value probing coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace wah
