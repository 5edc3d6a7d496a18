#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace evseg {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles. Everything the network touches is a
/// matrix; rank-2 accessors treat dimension 0 as rows and the rest as columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : values_.size() / rows(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

/// A trainable tensor owned by a model. Gradients live on the tape that used
/// it, so one parameter can take part in several independent tapes.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode record of executed primitives. Nodes are stored in execution
/// order, so reverse iteration is a valid topological order. A tape supports
/// exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that is differentiated iff `value.requires_grad()`.
  Var input(Tensor value);
  /// Leaf bound to a model parameter; repeated calls return the same node.
  Var parameter(const Parameter& p);

  /// Records a primitive's output. `fn` is dropped when no parent needs a
  /// gradient. Throws NonFiniteError when `value` holds NaN or Inf.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulator for node `id`, zero-initialised on first use.
  Tensor& grad_buffer(std::size_t id);

  void backward(Var loss);

  /// d(loss)/d(v); zeros when `v` did not influence the loss.
  Tensor grad(Var v) const;
  /// d(loss)/d(p); zeros when `p` was not used or did not influence the loss.
  Tensor grad(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> parameter_nodes_;
  bool consumed_ = false;
};

}  // namespace evseg
