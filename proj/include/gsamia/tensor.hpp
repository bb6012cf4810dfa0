#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gsamia {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array. A scalar has an empty shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Takes external values. Throws if the element count does not match the
  /// shape or if any value is NaN/Inf.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const;
  Tensor reshaped(Shape shape) const;
  void fill(double v);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Records a forward computation so it can be differentiated in reverse.
/// A tape is built for one forward pass and then discarded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into param.grad.
  Var param(Parameter& p);

  /// Seeds d(root)/d(root) = 1, propagates to every reachable node and adds
  /// the result onto the grad of each bound Parameter.
  void backward(Var root);

  /// Gradient of the last backward() root with respect to v.
  const Tensor& grad(Var v) const;

  /// While enabled, backward() also records for every row r of the batch
  /// the squared l2 norm of that row's contribution to the full parameter
  /// gradient, without materialising per-row gradients. Requires rows to be
  /// independent samples and every parameter to enter the graph exactly once,
  /// as the right operand of matmul or the bias of add_bias; backward()
  /// throws otherwise.
  void enable_per_sample_norms(std::size_t rows);
  void disable_per_sample_norms() { per_sample_rows_ = 0; }
  const std::vector<double>& per_sample_sq_norms() const { return per_sample_sq_; }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.value;
  }
  std::size_t size() const { return nodes_.size(); }

  // Op construction interface.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor& grad_buffer(std::size_t id);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  bool per_sample_enabled() const { return per_sample_rows_ > 0; }
  bool is_param(std::size_t id) const { return nodes_[id].param != nullptr; }
  /// Adds sq[r] to row r's squared gradient norm on behalf of a parameter leaf.
  void add_per_sample(std::size_t param_id, std::span<const double> sq);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    int per_sample_uses = 0;
  };
  std::vector<Node> nodes_;
  bool has_backward_ = false;
  std::size_t per_sample_rows_ = 0;
  std::vector<double> per_sample_sq_;
};

/// Free-function form; throws if root is not attached to a tape.
void backward(Var root);

// Differentiable ops. Shape mismatches throw std::invalid_argument naming the
// op and both operand shapes.
Var matmul(Var a, Var b);             // [m,k] x [k,n]
Var add(Var a, Var b);                // same shape
Var sub(Var a, Var b);                // same shape
Var mul(Var a, Var b);                // elementwise, same shape
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);        // [m,n] + [n]
Var concat_cols(Var a, Var b);        // [m,p] | [m,q] -> [m,p+q]
Var silu(Var a);
Var sigmoid(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);                       // -> scalar
Var mean(Var a);                      // -> scalar
Var sum_squares(Var a);               // -> scalar
Var row_sum_squares(Var a);           // [m,n] -> [m]
/// Mean binary cross-entropy of logits [m] against 0/1 targets [m].
Var bce_with_logits(Var logits, const Tensor& targets);

}  // namespace gsamia
