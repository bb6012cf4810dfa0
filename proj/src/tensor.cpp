#include "gsamia/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gsamia {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                     static_cast<Eigen::Index>(t.dim(1)));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                static_cast<Eigen::Index>(t.dim(1)));
}

void same_tape(const char* op, Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::logic_error(std::string(op) + ": operands are not on the same tape");
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_str(t.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " holds " +
                                std::to_string(shape_numel(shape_)) + " values, got " +
                                std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw std::invalid_argument("Tensor: non-finite value at index " + std::to_string(i));
    }
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, v); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str(shape_) +
                                " is not a scalar");
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) shape_error("reshape", shape_, shape);
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::logic_error("Var is not attached to a tape");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false, 0});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{Tensor(), {}, {}, {}, &p, true, 0});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  bool rg = false;
  for (auto p : parents) rg = rg || nodes_.at(p).requires_grad;
  Node n{std::move(value), {}, std::move(parents), {}, nullptr, rg, 0};
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) { return nodes_[id].grad; }

void Tape::enable_per_sample_norms(std::size_t rows) {
  if (rows == 0) throw std::invalid_argument("enable_per_sample_norms: rows must be positive");
  per_sample_rows_ = rows;
}

void Tape::add_per_sample(std::size_t param_id, std::span<const double> sq) {
  if (sq.size() != per_sample_rows_) {
    throw std::logic_error("per-sample norms: op produced " + std::to_string(sq.size()) +
                           " rows, expected " + std::to_string(per_sample_rows_));
  }
  nodes_[param_id].per_sample_uses += 1;
  for (std::size_t r = 0; r < sq.size(); ++r) per_sample_sq_[r] += sq[r];
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("backward: root belongs to another tape");
  if (value(root.id).numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                shape_str(value(root.id).shape()));
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad) {
      n.grad = Tensor(value(i).shape());
    } else {
      n.grad = Tensor();
    }
  }
  has_backward_ = true;
  per_sample_sq_.assign(per_sample_rows_, 0.0);
  for (auto& n : nodes_) n.per_sample_uses = 0;
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad.fill(1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  if (per_sample_enabled()) {
    for (std::size_t i = 0; i <= root.id; ++i) {
      const auto& n = nodes_[i];
      if (n.param != nullptr && n.per_sample_uses != 1) {
        throw std::logic_error("per-sample norms: parameter '" + n.param->name +
                               "' is not used exactly once as a matmul weight or bias");
      }
    }
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    auto& n = nodes_[i];
    if (n.param != nullptr) accumulate(n.param->grad, n.grad);
  }
}

const Tensor& Tape::grad(Var v) const {
  if (!has_backward_) throw std::logic_error("Tape::grad: backward has not been run");
  return nodes_.at(v.id).grad;
}

void backward(Var root) {
  if (root.tape == nullptr) throw std::logic_error("backward: no tape recorded for root");
  root.tape->backward(root);
}

Var matmul(Var a, Var b) {
  same_tape("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    shape_error("matmul", A.shape(), B.shape());
  }
  Tensor out({A.dim(0), B.dim(1)});
  as_matrix(out).noalias() = as_matrix(A) * as_matrix(B);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = as_matrix(tp.out_grad(self));
    if (tp.requires_grad(ia)) {
      as_matrix(tp.grad_buffer(ia)).noalias() += g * as_matrix(tp.value(ib)).transpose();
    }
    if (tp.requires_grad(ib)) {
      const auto a = as_matrix(tp.value(ia));
      as_matrix(tp.grad_buffer(ib)).noalias() += a.transpose() * g;
      if (tp.per_sample_enabled() && tp.is_param(ib)) {
        const Eigen::VectorXd sq = a.rowwise().squaredNorm().cwiseProduct(g.rowwise().squaredNorm());
        tp.add_per_sample(ib, std::span<const double>(sq.data(), static_cast<std::size_t>(sq.size())));
      }
    }
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var binary_same_shape(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  same_tape(op, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_error(op, A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(A[i], B[i]);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, bwd](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& va = tp.value(ia);
    const Tensor& vb = tp.value(ib);
    const bool ga = tp.requires_grad(ia), gb = tp.requires_grad(ib);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      auto [da, db] = bwd(va[i], vb[i]);
      if (ga) tp.grad_buffer(ia)[i] += g[i] * da;
      if (gb) tp.grad_buffer(ib)[i] += g[i] * db;
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
  return binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
  return binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const auto ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, s](Tape& tp, std::size_t self) {
    accumulate(tp.grad_buffer(ia), tp.out_grad(self), s);
  });
}

Var add_bias(Var a, Var bias) {
  same_tape("add_bias", a, bias);
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  if (A.rank() != 2 || b.rank() != 1 || A.dim(1) != b.dim(0)) {
    shape_error("add_bias", A.shape(), b.shape());
  }
  Tensor out = A;
  const std::size_t m = A.dim(0), n = A.dim(1);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += b[c];
  const auto ia = a.id, ib = bias.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (tp.requires_grad(ia)) accumulate(tp.grad_buffer(ia), g);
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g.at(r, c);
      if (tp.per_sample_enabled() && tp.is_param(ib)) {
        std::vector<double> sq(m, 0.0);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) sq[r] += g.at(r, c) * g.at(r, c);
        tp.add_per_sample(ib, sq);
      }
    }
  });
}

Var concat_cols(Var a, Var b) {
  same_tape("concat_cols", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0)) {
    shape_error("concat_cols", A.shape(), B.shape());
  }
  const std::size_t m = A.dim(0), p = A.dim(1), q = B.dim(1);
  Tensor out({m, p + q});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < p; ++c) out.at(r, c) = A.at(r, c);
    for (std::size_t c = 0; c < q; ++c) out.at(r, p + c) = B.at(r, c);
  }
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const bool ga = tp.requires_grad(ia), gb = tp.requires_grad(ib);
    for (std::size_t r = 0; r < m; ++r) {
      if (ga)
        for (std::size_t c = 0; c < p; ++c) tp.grad_buffer(ia).at(r, c) += g.at(r, c);
      if (gb)
        for (std::size_t c = 0; c < q; ++c) tp.grad_buffer(ib).at(r, c) += g.at(r, p + c);
    }
  });
}

Var silu(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) out[i] = A[i] * logistic(A[i]);
  const auto ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& x = tp.value(ia);
    Tensor& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double s = logistic(x[i]);
      gx[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var sigmoid(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) out[i] = logistic(A[i]);
  const auto ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    accumulate(tp.grad_buffer(ia), tp.out_grad(self));
  });
}

Var sum(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.data()) s += v;
  const auto ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    for (auto& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a) {
  const Tensor& A = a.value();
  if (A.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double v : A.data()) s += v;
  const double inv = 1.0 / static_cast<double>(A.numel());
  const auto ia = a.id;
  return a.tape->record(Tensor::scalar(s * inv), {ia}, [ia, inv](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0] * inv;
    for (auto& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var sum_squares(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.data()) s += v * v;
  const auto ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    const Tensor& x = tp.value(ia);
    Tensor& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += 2.0 * g * x[i];
  });
}

Var row_sum_squares(Var a) {
  const Tensor& A = a.value();
  require_rank("row_sum_squares", A, 2);
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += A.at(r, c) * A.at(r, c);
    out[r] = s;
  }
  const auto ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& x = tp.value(ia);
    Tensor& gx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) gx.at(r, c) += 2.0 * g[r] * x.at(r, c);
  });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.rank() != 1 || targets.shape() != z.shape()) {
    shape_error("bce_with_logits", z.shape(), targets.shape());
  }
  const std::size_t m = z.numel();
  if (m == 0) throw std::invalid_argument("bce_with_logits: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    s += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double inv = 1.0 / static_cast<double>(m);
  const auto iz = logits.id;
  return logits.tape->record(
      Tensor::scalar(s * inv), {iz}, [iz, targets, inv](Tape& tp, std::size_t self) {
        const double g = tp.out_grad(self)[0] * inv;
        const Tensor& zz = tp.value(iz);
        Tensor& gz = tp.grad_buffer(iz);
        for (std::size_t i = 0; i < zz.numel(); ++i) gz[i] += g * (logistic(zz[i]) - targets[i]);
      });
}

}  // namespace gsamia
