#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perinv/tensor.hpp"

// Tensor-level reverse-mode differentiation. A Tape records one evaluation of
// a scalar objective; it is built per call and never shared between threads.
namespace perinv::ad {

// When on, every recorded operation rejects non-finite results with a
// NumericError naming the operation. Process-wide; defaults to on.
void set_checked_mode(bool on);
bool checked_mode();

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  double item() const { return value().item(); }
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Accumulates the upstream gradient into the node's inputs; `output` is the
  // node's own forward value.
  using Backward =
      std::function<void(Tape&, std::span<const double> upstream, const Tensor& output)>;

  explicit Tape(bool checked = checked_mode()) : checked_(checked) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Records a computed node. `inputs` decide whether it participates in
  // backward; `backward` may be empty for nodes that need no gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward backward);

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  // Gradient buffer for a node, allocated as zeros on first touch.
  std::vector<double>& grad_buffer(Var v);

  // Seeds d(root)/d(root) = 1 and propagates in reverse recording order.
  void backward(Var root);

  // Gradient of the last backward root with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const;

 private:
  struct Node {
    const char* op;
    Tensor value;
    bool requires_grad;
    Backward backward;
    std::vector<double> grad;
  };
  bool checked_;
  std::vector<Node> nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
// Element-wise product; either side may be a scalar (broadcast).
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var square(Var a);
Var relu(Var a);
// x: [m, in], w: [out, in], b: [out] -> x * w^T + b, shape [m, out].
Var linear(Var x, Var w, Var b);
Var softmax_rows(Var z);
Var log_softmax_rows(Var z);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

// A scalar objective receives one Var per layout entry, in layout order.
using Objective = std::function<Var(Tape&, std::span<const Var> params)>;
using ScalarFunction = std::function<double(const ParamVector&)>;

struct ValueAndGrad {
  double value;
  ParamVector grad;
};

ValueAndGrad value_and_grad(const Objective& objective, const ParamVector& at);
ParamVector grad(const Objective& objective, const ParamVector& at);
// Forward pass only; parameters enter as constants so nothing is retained for backward.
double evaluate(const Objective& objective, const ParamVector& at);
ScalarFunction as_function(Objective objective);

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h per coordinate.
ParamVector finite_diff_grad(const ScalarFunction& f, const ParamVector& at, double h);

// ||a - b||_inf / (1 + ||a||_inf); the agreement measure used by every gradient audit.
double relative_error(const ParamVector& a, const ParamVector& b);

}  // namespace perinv::ad
