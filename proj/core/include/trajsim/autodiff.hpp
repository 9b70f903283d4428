#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajsim::ad {

/// Thrown when a primitive's inputs have incompatible shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense double-precision array of rank 0, 1 or 2, row-major.
class Tensor {
 public:
  Tensor() = default;
  /// Rank-0 scalar.
  static Tensor scalar(double v);
  static Tensor vector(std::size_t n, double fill = 0.0);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor zeros_like(const Tensor& t);

  int rank() const { return rank_; }
  std::size_t rows() const { return rows_; }
  /// 1 for rank 0 and rank 1.
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_string() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double item() const;

  bool all_finite() const;
  void fill(double v);

  bool operator==(const Tensor&) const = default;

 private:
  int rank_ = 0;
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
  std::vector<double> data_{0.0};
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t index = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order, and backward() walks them once in reverse.
///
/// Shapes: elementwise ops need equal shapes; scale_by multiplies a tensor by
/// a rank-0 Var; matmul takes (m x k)(k x n) or (m x k)(k). concat flattens
/// its inputs into one vector.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;

  Var constant(Tensor value);
  /// Leaf whose gradient is accumulated by backward().
  Var parameter(Tensor value);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() loss w.r.t. `v` (zeros if unreached).
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var matmul(Var a, Var b);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var neg(Var a);
  Var relu(Var a);
  Var reciprocal(Var a);
  /// Softmax along the last dimension (per row for matrices).
  Var softmax(Var a);
  /// Euclidean norm of all elements. With eps > 0 computes sqrt(|a|^2 + eps^2);
  /// with eps == 0 the backward rule throws at the origin.
  Var l2_norm(Var a, double eps = 0.0);
  Var sum(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  /// Rank-0 `s` times tensor `a`.
  Var scale_by(Var s, Var a);
  /// Contiguous elements [offset, offset + len) of a vector.
  Var slice(Var a, std::size_t offset, std::size_t len);
  /// Element i of a vector as a rank-0 value.
  Var element(Var a, std::size_t i);
  /// gain * (a - mean) / sqrt(var + eps) + bias over a vector.
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
  /// Inner product of two equal-shape tensors.
  Var dot(Var a, Var b);
  /// Equal-length vectors as the rows of a matrix.
  Var stack(std::span<const Var> rows);
  /// Row i of a matrix as a vector.
  Var row(Var a, std::size_t i);

  /// Accumulates d(loss)/d(v) for every parameter. `loss` must be rank 0 or
  /// hold a single element. A second call without reset() throws.
  void backward(Var loss);

  /// Drops all nodes.
  void reset();
  std::size_t size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Scalar-valued function of one tensor, expressed on a tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - numeric| / max(1, |analytic|), with
/// central differences of the given step. Throws std::domain_error if any
/// evaluated value is non-finite.
double gradient_check(const TapeFunction& f, const Tensor& x, double step = 1e-5);

}  // namespace trajsim::ad
