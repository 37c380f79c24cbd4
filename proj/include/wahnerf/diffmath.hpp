#pragma once

// Array-valued reverse-mode automatic differentiation.
//
// A DualArray is an immutable block of doubles with a shape. When it was
// produced on a Tape it also remembers its node, and every operation whose
// inputs live on that tape records a node of its own. Tape::backward() walks
// the nodes in reverse and accumulates adjoints. Constants (no tape) flow
// through the same operations without recording anything, which is how
// inference and finite-difference probes run.
//
// Broadcasting is deliberately minimal: elementwise operations accept equal
// shapes, or one operand with a single element.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wahnerf/error.hpp"

namespace wah {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tape;

class DualArray {
 public:
  DualArray() : DualArray(Shape{}, std::vector<double>{0.0}) {}
  DualArray(Shape shape, std::vector<double> values);

  static DualArray scalar(double v) { return DualArray(Shape{}, {v}); }
  static DualArray full(Shape shape, double v);
  static DualArray zeros(Shape shape) { return full(std::move(shape), 0.0); }
  /// Column vector (n x 1).
  static DualArray column(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_->size(); }
  /// Product of every dimension but the last (1 for scalars).
  std::size_t rows() const;
  /// Last dimension (1 for scalars).
  std::size_t cols() const;

  std::span<const double> values() const { return *values_; }
  double operator[](std::size_t i) const { return (*values_)[i]; }
  double at(std::size_t row, std::size_t col) const { return (*values_)[row * cols() + col]; }
  /// The single value of a one-element array.
  double item() const;

  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  /// Shared handle to the value buffer; backward closures keep it alive.
  const std::shared_ptr<const std::vector<double>>& buffer() const { return values_; }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(std::span<const double> out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New differentiable leaf.
  DualArray variable(Shape shape, std::vector<double> values);
  DualArray variable(const DualArray& value);

  /// Seeds d(output)/d(output) = 1 and propagates. Gradients from any earlier
  /// backward() are cleared first, so repeated calls give identical results.
  void backward(const DualArray& output);

  /// Gradient of the last backward() w.r.t. x. Zeros for constants, for
  /// arrays on another tape, and for nodes the output does not depend on.
  std::vector<double> grad(const DualArray& x) const;

  /// Drops every node. DualArrays recorded earlier must not be used again.
  void reset();
  std::size_t size() const { return nodes_.size(); }

  /// Records an op result. `backward` receives the output adjoint and adds
  /// into parents via accumulate().
  DualArray record(Shape shape, std::vector<double> values, Backward backward);

  /// Adjoint buffer of a node, allocated (zeroed) on first use.
  std::vector<double>& grad_buffer(std::size_t node);

 private:
  struct Node {
    std::size_t size = 0;
    std::vector<double> grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitive operations. All of them accept constants and taped arrays in any
// combination; mixing two different tapes is rejected.

DualArray add(const DualArray& a, const DualArray& b);
DualArray sub(const DualArray& a, const DualArray& b);
DualArray mul(const DualArray& a, const DualArray& b);
DualArray div(const DualArray& a, const DualArray& b);
DualArray neg(const DualArray& a);

DualArray exp(const DualArray& a);
/// Rejects non-positive input.
DualArray log(const DualArray& a);
DualArray sin(const DualArray& a);
DualArray cos(const DualArray& a);
/// Rejects negative input.
DualArray sqrt(const DualArray& a);
DualArray pow(const DualArray& a, double exponent);
DualArray square(const DualArray& a);
DualArray softplus(const DualArray& a);
DualArray sigmoid(const DualArray& a);
DualArray relu(const DualArray& a);

/// Elementwise max/min. On ties the gradient goes to `a`.
DualArray maximum(const DualArray& a, const DualArray& b);
DualArray minimum(const DualArray& a, const DualArray& b);
/// Gradient 1 on [lo, hi] (boundaries included), 0 outside.
DualArray clamp(const DualArray& a, double lo, double hi);

/// (n x k) * (k x m).
DualArray matmul(const DualArray& a, const DualArray& b);

/// Dense layer x * w + b with b (1 x m) added to every row, plus an optional
/// n x m addend, optionally followed by relu. One node instead of four, which
/// matters for the large per-sample activations.
DualArray affine(const DualArray& x, const DualArray& w, const DualArray& b, const DualArray* addend = nullptr,
                 bool apply_relu = false);

DualArray sum(const DualArray& a);
DualArray mean(const DualArray& a);
/// Sum over the last axis: (rows x cols) -> (rows x 1).
DualArray row_sum(const DualArray& a);
DualArray row_mean(const DualArray& a);
/// Inclusive cumulative sum along the last axis.
DualArray cumsum(const DualArray& a);

/// out[r, j] = a[r, index[r * k + j]] when index has rows*k entries, or
/// a[r, index[j]] when it has k entries. The gradient is scattered back.
DualArray gather(const DualArray& a, std::span<const std::size_t> index, std::size_t k);
DualArray reshape(const DualArray& a, Shape shape);
/// Concatenates along the last axis; all inputs need the same row count.
DualArray concat_cols(const std::vector<DualArray>& parts);
/// Same values, cut from the tape.
DualArray detach(const DualArray& a);

inline DualArray operator+(const DualArray& a, const DualArray& b) { return add(a, b); }
inline DualArray operator-(const DualArray& a, const DualArray& b) { return sub(a, b); }
inline DualArray operator*(const DualArray& a, const DualArray& b) { return mul(a, b); }
inline DualArray operator/(const DualArray& a, const DualArray& b) { return div(a, b); }
inline DualArray operator-(const DualArray& a) { return neg(a); }
inline DualArray operator+(const DualArray& a, double b) { return add(a, DualArray::scalar(b)); }
inline DualArray operator+(double a, const DualArray& b) { return add(DualArray::scalar(a), b); }
inline DualArray operator-(const DualArray& a, double b) { return sub(a, DualArray::scalar(b)); }
inline DualArray operator-(double a, const DualArray& b) { return sub(DualArray::scalar(a), b); }
inline DualArray operator*(const DualArray& a, double b) { return mul(a, DualArray::scalar(b)); }
inline DualArray operator*(double a, const DualArray& b) { return mul(DualArray::scalar(a), b); }
inline DualArray operator/(const DualArray& a, double b) { return div(a, DualArray::scalar(b)); }
inline DualArray operator/(double a, const DualArray& b) { return div(DualArray::scalar(a), b); }

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for a scalar-valued f. Throws NumericError if f is non-finite anywhere it
/// is probed.
double grad_check(const std::function<DualArray(const DualArray&)>& f, const DualArray& x,
                  double h = 1e-5);

}  // namespace wah
