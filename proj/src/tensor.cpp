#include "evseg/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "evseg/error.hpp"

namespace evseg {
namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw ShapeError("tensor data size " + std::to_string(values_.size()) +
                     " does not match shape " + shape_string());
  }
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) ss << (i ? "x" : "") << shape_[i];
  ss << ']';
  return ss.str();
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.requires_grad = value.requires_grad();
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
  if (auto it = parameter_nodes_.find(&p); it != parameter_nodes_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  Var v = push(std::move(n));
  parameter_nodes_.emplace(&p, v.id);
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value produced by primitive");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape != this) throw ShapeError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw StaleTapeError("backward already ran on this tape; re-run the forward pass");
  if (loss.tape != this) throw ShapeError("loss recorded on a different tape");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward needs a scalar loss");
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
}

Tensor Tape::grad(const Parameter& p) const {
  auto it = parameter_nodes_.find(&p);
  if (it == parameter_nodes_.end()) return Tensor(p.value.shape(), 0.0);
  return grad(Var{const_cast<Tape*>(this), it->second});
}

}  // namespace evseg
