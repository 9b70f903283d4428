#include "trajsim/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

namespace trajsim::ad {

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_ = {v};
  return t;
}

Tensor Tensor::vector(std::size_t n, double fill) {
  Tensor t;
  t.rank_ = 1;
  t.rows_ = n;
  t.cols_ = 1;
  t.data_.assign(n, fill);
  return t;
}

Tensor Tensor::vector(std::vector<double> data) {
  Tensor t;
  t.rank_ = 1;
  t.rows_ = data.size();
  t.cols_ = 1;
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  Tensor t;
  t.rank_ = 2;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_.assign(rows * cols, fill);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) throw ShapeError("matrix data does not match shape");
  Tensor t;
  t.rank_ = 2;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& o) {
  Tensor t = o;
  std::fill(t.data_.begin(), t.data_.end(), 0.0);
  return t;
}

std::string Tensor::shape_string() const {
  switch (rank_) {
    case 0: return "()";
    case 1: return "(" + std::to_string(rows_) + ")";
    default: return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// ---------------------------------------------------------------------------
// Tape

namespace {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Hadamard,
  MatMul,
  Concat,
  Tanh,
  Sigmoid,
  Cos,
  Exp,
  Neg,
  Relu,
  Reciprocal,
  Softmax,
  L2Norm,
  Sum,
  Scale,
  AddScalar,
  ScaleBy,
  Slice,
  LayerNorm,
  Dot,
  Stack,
  Row,
};

struct Node {
  Op op = Op::Leaf;
  bool requires_grad = false;
  Tensor value;
  Tensor grad;
  std::vector<std::uint32_t> inputs;
  double c = 0.0;           // scale / eps / layer-norm inverse std
  std::size_t offset = 0;   // slice start
  Tensor aux;               // layer-norm normalized input
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

CMapMat as_mat(const Tensor& t) { return CMapMat(t.data().data(), t.rows(), t.cols()); }
MapMat as_mat(Tensor& t) { return MapMat(t.data().data(), t.rows(), t.cols()); }
CMapVec as_vec(const Tensor& t) { return CMapVec(t.data().data(), t.size()); }
MapVec as_vec(Tensor& t) { return MapVec(t.data().data(), t.size()); }

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

struct Tape::Impl {
  std::vector<Node> nodes;
  bool backward_done = false;

  const Node& node(Var v) const {
    if (v.index >= nodes.size()) throw std::out_of_range("Var does not belong to this tape");
    return nodes[v.index];
  }

  Var push(Op op, Tensor value, std::initializer_list<Var> in) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (Var v : in) {
      n.inputs.push_back(v.index);
      n.requires_grad = n.requires_grad || nodes[v.index].requires_grad;
    }
    nodes.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes.size() - 1)};
  }

  template <typename F>
  Var unary(Op op, Var a, F&& f) {
    Tensor out = node(a).value;
    for (double& x : out.data()) x = f(x);
    return push(op, std::move(out), {a});
  }
};

Tape::Tape() : impl_(std::make_unique<Impl>()) {}
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

Var Tape::constant(Tensor value) { return impl_->push(Op::Leaf, std::move(value), {}); }

Var Tape::parameter(Tensor value) {
  Var v = impl_->push(Op::Leaf, std::move(value), {});
  impl_->nodes[v.index].requires_grad = true;
  return v;
}

const Tensor& Tape::value(Var v) const { return impl_->node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = impl_->node(v);
  if (!impl_->backward_done) throw std::logic_error("grad() before backward()");
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return impl_->node(v).requires_grad; }

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same(x, y, "add");
  Tensor out = x;
  as_vec(out) += as_vec(y);
  return impl_->push(Op::Add, std::move(out), {a, b});
}

Var Tape::sub(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same(x, y, "sub");
  Tensor out = x;
  as_vec(out) -= as_vec(y);
  return impl_->push(Op::Sub, std::move(out), {a, b});
}

Var Tape::hadamard(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same(x, y, "hadamard");
  Tensor out = x;
  as_vec(out).array() *= as_vec(y).array();
  return impl_->push(Op::Hadamard, std::move(out), {a, b});
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() == 0 || x.cols() != y.rows()) {
    throw ShapeError("matmul: cannot multiply " + x.shape_string() + " by " + y.shape_string());
  }
  Tensor out = y.rank() == 1 ? Tensor::vector(x.rows()) : Tensor::matrix(x.rows(), y.cols());
  if (y.rank() == 1) {
    as_vec(out).noalias() = as_mat(x) * as_vec(y);
  } else {
    as_mat(out).noalias() = as_mat(x) * as_mat(y);
  }
  return impl_->push(Op::MatMul, std::move(out), {a, b});
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  std::size_t n = 0;
  for (Var v : parts) n += value(v).size();
  Tensor out = Tensor::vector(n);
  std::size_t at = 0;
  bool rg = false;
  Node node;
  for (Var v : parts) {
    const Tensor& t = value(v);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += t.size();
    rg = rg || impl_->nodes[v.index].requires_grad;
    node.inputs.push_back(v.index);
  }
  node.op = Op::Concat;
  node.requires_grad = rg;
  node.value = std::move(out);
  impl_->nodes.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(impl_->nodes.size() - 1)};
}

Var Tape::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Tape::tanh(Var a) { return impl_->unary(Op::Tanh, a, [](double x) { return std::tanh(x); }); }

Var Tape::sigmoid(Var a) {
  return impl_->unary(Op::Sigmoid, a, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Var Tape::cos(Var a) { return impl_->unary(Op::Cos, a, [](double x) { return std::cos(x); }); }
Var Tape::exp(Var a) { return impl_->unary(Op::Exp, a, [](double x) { return std::exp(x); }); }
Var Tape::neg(Var a) { return impl_->unary(Op::Neg, a, [](double x) { return -x; }); }
Var Tape::relu(Var a) {
  return impl_->unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Var Tape::reciprocal(Var a) {
  return impl_->unary(Op::Reciprocal, a, [](double x) { return 1.0 / x; });
}

Var Tape::softmax(Var a) {
  Tensor out = value(a);
  const std::size_t width = out.rank() == 2 ? out.cols() : out.size();
  const std::size_t rows = out.size() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double z = 0.0;
    for (std::size_t i = 0; i < width; ++i) z += (row[i] = std::exp(row[i] - mx));
    for (std::size_t i = 0; i < width; ++i) row[i] /= z;
  }
  return impl_->push(Op::Softmax, std::move(out), {a});
}

Var Tape::l2_norm(Var a, double eps) {
  if (eps < 0.0) throw std::invalid_argument("l2_norm eps must be >= 0");
  const double sq = as_vec(value(a)).squaredNorm();
  Var v = impl_->push(Op::L2Norm, Tensor::scalar(std::sqrt(sq + eps * eps)), {a});
  impl_->nodes[v.index].c = eps;
  return v;
}

Var Tape::sum(Var a) {
  return impl_->push(Op::Sum, Tensor::scalar(as_vec(value(a)).sum()), {a});
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  as_vec(out) *= c;
  Var v = impl_->push(Op::Scale, std::move(out), {a});
  impl_->nodes[v.index].c = c;
  return v;
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = value(a);
  as_vec(out).array() += c;
  return impl_->push(Op::AddScalar, std::move(out), {a});
}

Var Tape::scale_by(Var s, Var a) {
  const Tensor& sv = value(s);
  if (sv.size() != 1) throw ShapeError("scale_by: multiplier must be a scalar, got " + sv.shape_string());
  Tensor out = value(a);
  as_vec(out) *= sv[0];
  return impl_->push(Op::ScaleBy, std::move(out), {s, a});
}

Var Tape::slice(Var a, std::size_t offset, std::size_t len) {
  const Tensor& x = value(a);
  if (x.rank() != 1 || offset + len > x.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                     ") out of range for " + x.shape_string());
  }
  std::vector<double> d(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                        x.data().begin() + static_cast<std::ptrdiff_t>(offset + len));
  Var v = impl_->push(Op::Slice, Tensor::vector(std::move(d)), {a});
  impl_->nodes[v.index].offset = offset;
  return v;
}

Var Tape::element(Var a, std::size_t i) {
  const Tensor& x = value(a);
  if (i >= x.size()) throw ShapeError("element index out of range for " + x.shape_string());
  Var v = impl_->push(Op::Slice, Tensor::scalar(x[i]), {a});
  impl_->nodes[v.index].offset = i;
  return v;
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Tensor& x = value(a);
  require_same(x, value(gain), "layer_norm gain");
  require_same(x, value(bias), "layer_norm bias");
  if (x.rank() != 1) throw ShapeError("layer_norm expects a vector");
  const auto xv = as_vec(x);
  const double mean = xv.mean();
  const double var = (xv.array() - mean).square().mean();
  const double inv_std = 1.0 / std::sqrt(var + eps);
  Tensor xhat = x;
  as_vec(xhat) = (xv.array() - mean) * inv_std;
  Tensor out = xhat;
  as_vec(out) = as_vec(xhat).cwiseProduct(as_vec(value(gain))) + as_vec(value(bias));
  Var v = impl_->push(Op::LayerNorm, std::move(out), {a, gain, bias});
  impl_->nodes[v.index].c = inv_std;
  impl_->nodes[v.index].aux = std::move(xhat);
  return v;
}

Var Tape::dot(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same(x, y, "dot");
  return impl_->push(Op::Dot, Tensor::scalar(as_vec(x).dot(as_vec(y))), {a, b});
}

Var Tape::stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack of nothing");
  const std::size_t width = value(rows[0]).size();
  Tensor out = Tensor::matrix(rows.size(), width);
  Node node;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& t = value(rows[r]);
    if (t.rank() != 1 || t.size() != width) {
      throw ShapeError("stack: row " + std::to_string(r) + " has shape " + t.shape_string());
    }
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * width));
    node.requires_grad = node.requires_grad || impl_->nodes[rows[r].index].requires_grad;
    node.inputs.push_back(rows[r].index);
  }
  node.op = Op::Stack;
  node.value = std::move(out);
  impl_->nodes.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(impl_->nodes.size() - 1)};
}

Var Tape::row(Var a, std::size_t i) {
  const Tensor& x = value(a);
  if (x.rank() != 2 || i >= x.rows()) {
    throw ShapeError("row " + std::to_string(i) + " out of range for " + x.shape_string());
  }
  const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(i * x.cols());
  Var v = impl_->push(Op::Row, Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(x.cols()))), {a});
  impl_->nodes[v.index].offset = i * x.cols();
  return v;
}

void Tape::backward(Var loss) {
  if (impl_->backward_done) throw std::logic_error("backward() called twice without reset()");
  auto& nodes = impl_->nodes;
  if (loss.index >= nodes.size()) throw std::out_of_range("loss Var does not belong to this tape");
  if (nodes[loss.index].value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     nodes[loss.index].value.shape_string());
  }
  for (Node& n : nodes) n.grad = Tensor::zeros_like(n.value);
  impl_->backward_done = true;
  nodes[loss.index].grad[0] = 1.0;

  for (std::size_t idx = loss.index + 1; idx-- > 0;) {
    Node& n = nodes[idx];
    if (!n.requires_grad || n.op == Op::Leaf) continue;
    const Tensor& g = n.grad;
    const Tensor& y = n.value;
    auto in = [&](std::size_t k) -> Node& { return nodes[n.inputs[k]]; };
    auto gin = [&](std::size_t k) { return as_vec(in(k).grad); };
    auto wants = [&](std::size_t k) { return in(k).requires_grad; };
    const auto gv = as_vec(g);

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (wants(0)) gin(0) += gv;
        if (wants(1)) gin(1) += gv;
        break;
      case Op::Sub:
        if (wants(0)) gin(0) += gv;
        if (wants(1)) gin(1) -= gv;
        break;
      case Op::Hadamard:
        if (wants(0)) gin(0).array() += gv.array() * as_vec(in(1).value).array();
        if (wants(1)) gin(1).array() += gv.array() * as_vec(in(0).value).array();
        break;
      case Op::MatMul: {
        Node& a = in(0);
        Node& b = in(1);
        if (b.value.rank() == 1) {
          if (a.requires_grad) as_mat(a.grad).noalias() += gv * as_vec(b.value).transpose();
          if (b.requires_grad) as_vec(b.grad).noalias() += as_mat(a.value).transpose() * gv;
        } else {
          const auto gm = as_mat(g);
          if (a.requires_grad) as_mat(a.grad).noalias() += gm * as_mat(b.value).transpose();
          if (b.requires_grad) as_mat(b.grad).noalias() += as_mat(a.value).transpose() * gm;
        }
        break;
      }
      case Op::Concat: {
        std::size_t at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t len = in(k).value.size();
          if (wants(k)) gin(k) += gv.segment(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(len));
          at += len;
        }
        break;
      }
      case Op::Tanh:
        gin(0).array() += gv.array() * (1.0 - as_vec(y).array().square());
        break;
      case Op::Sigmoid:
        gin(0).array() += gv.array() * as_vec(y).array() * (1.0 - as_vec(y).array());
        break;
      case Op::Cos:
        gin(0).array() -= gv.array() * as_vec(in(0).value).array().sin();
        break;
      case Op::Exp:
        gin(0).array() += gv.array() * as_vec(y).array();
        break;
      case Op::Neg:
        gin(0) -= gv;
        break;
      case Op::Relu:
        gin(0).array() += (as_vec(in(0).value).array() > 0.0).select(gv.array(), 0.0);
        break;
      case Op::Reciprocal:
        gin(0).array() -= gv.array() * as_vec(y).array().square();
        break;
      case Op::Softmax: {
        const std::size_t width = y.rank() == 2 ? y.cols() : y.size();
        const std::size_t rows = y.size() / width;
        auto gx = gin(0);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto w = static_cast<Eigen::Index>(width);
          const auto off = static_cast<Eigen::Index>(r * width);
          const auto ys = as_vec(y).segment(off, w);
          const auto gs = gv.segment(off, w);
          const double inner = ys.dot(gs);
          gx.segment(off, w).array() += ys.array() * (gs.array() - inner);
        }
        break;
      }
      case Op::L2Norm: {
        const double norm = y[0];
        if (norm == 0.0) {
          throw std::domain_error("l2_norm gradient is undefined at the zero vector");
        }
        gin(0) += (g[0] / norm) * as_vec(in(0).value);
        break;
      }
      case Op::Sum:
        gin(0).array() += g[0];
        break;
      case Op::Scale:
        gin(0) += n.c * gv;
        break;
      case Op::AddScalar:
        gin(0) += gv;
        break;
      case Op::ScaleBy:
        if (wants(0)) in(0).grad[0] += gv.dot(as_vec(in(1).value));
        if (wants(1)) gin(1) += in(0).value[0] * gv;
        break;
      case Op::Stack: {
        const auto w = static_cast<Eigen::Index>(y.cols());
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          if (wants(k)) gin(k) += gv.segment(static_cast<Eigen::Index>(k) * w, w);
        }
        break;
      }
      case Op::Row:
      case Op::Slice:
        gin(0).segment(static_cast<Eigen::Index>(n.offset), static_cast<Eigen::Index>(g.size())) += gv;
        break;
      case Op::LayerNorm: {
        const auto xhat = as_vec(n.aux);
        if (wants(1)) gin(1).array() += gv.array() * xhat.array();
        if (wants(2)) gin(2) += gv;
        if (wants(0)) {
          const Eigen::VectorXd gx_hat = gv.cwiseProduct(as_vec(in(1).value));
          const double m1 = gx_hat.mean();
          const double m2 = gx_hat.cwiseProduct(xhat).mean();
          gin(0).array() += n.c * (gx_hat.array() - m1 - xhat.array() * m2);
        }
        break;
      }
      case Op::Dot:
        if (wants(0)) gin(0) += g[0] * as_vec(in(1).value);
        if (wants(1)) gin(1) += g[0] * as_vec(in(0).value);
        break;
    }
  }
}

void Tape::reset() {
  impl_->nodes.clear();
  impl_->backward_done = false;
}

std::size_t Tape::size() const { return impl_->nodes.size(); }

// ---------------------------------------------------------------------------

double gradient_check(const TapeFunction& f, const Tensor& x, double step) {
  if (!x.all_finite()) throw std::domain_error("gradient_check: non-finite input");
  Tape tape;
  const Var xv = tape.parameter(x);
  const Var y = f(tape, xv);
  if (!tape.value(y).all_finite()) throw std::domain_error("gradient_check: non-finite value");
  tape.backward(y);
  const Tensor analytic = tape.grad(xv);
  if (!analytic.all_finite()) throw std::domain_error("gradient_check: non-finite gradient");

  auto eval = [&](const Tensor& at) {
    Tape t;
    const double v = t.value(f(t, t.constant(at))).item();
    if (!std::isfinite(v)) throw std::domain_error("gradient_check: non-finite value");
    return v;
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = eval(probe);
    probe[i] = x[i] - step;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace trajsim::ad
