#include "perinv/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "perinv/errors.hpp"

namespace perinv::ad {

namespace {

std::atomic<bool> g_checked{true};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using Mat = Eigen::Map<RowMajor>;

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw LayoutError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

bool is_scalar(Var v) { return v.value().size() == 1; }

// Shapes compatible for element-wise ops: equal, or one side a single value.
Shape broadcast_shape(const char* op, Var a, Var b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(b)) return a.shape();
  if (is_scalar(a)) return b.shape();
  require_same_shape(op, a, b);
  return a.shape();
}

void accumulate(Tape& t, Var v, std::span<const double> g) {
  if (!t.requires_grad(v)) return;
  auto& buf = t.grad_buffer(v);
  if (buf.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  } else {
    // Broadcast scalar receives the sum of its uses.
    double s = 0.0;
    for (double x : g) s += x;
    buf[0] += s;
  }
}

}  // namespace

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(); }

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), true, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  if (checked_ && !value.all_finite()) {
    throw NumericError(op, "non-finite value in result of shape " + shape_str(value.shape()));
  }
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  nodes_.push_back(Node{op, std::move(value), needs, needs ? std::move(backward) : nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(Var v) {
  auto& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) {
    throw LayoutError("backward root must be a scalar, got " + shape_str(root.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(root)[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Copy: the callback may grow other buffers but never this node's.
    const std::vector<double> upstream = n.grad;
    n.backward(*this, upstream, n.value);
    if (checked_) {
      for (double g : upstream) {
        if (!std::isfinite(g)) throw NumericError(n.op, "non-finite gradient");
      }
    }
  }
}

Tensor Tape::grad(Var v) const {
  const auto& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

Var add(Var a, Var b) {
  const Shape shape = broadcast_shape("add", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(shape_size(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[av.size() == 1 ? 0 : i] + bv[bv.size() == 1 ? 0 : i];
  }
  return a.tape().record("add", Tensor(shape, std::move(out)), {a, b},
                         [a, b](Tape& t, std::span<const double> g, const Tensor&) {
                           accumulate(t, a, g);
                           accumulate(t, b, g);
                         });
}

Var sub(Var a, Var b) {
  const Shape shape = broadcast_shape("sub", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(shape_size(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[av.size() == 1 ? 0 : i] - bv[bv.size() == 1 ? 0 : i];
  }
  return a.tape().record("sub", Tensor(shape, std::move(out)), {a, b},
                         [a, b](Tape& t, std::span<const double> g, const Tensor&) {
                           accumulate(t, a, g);
                           std::vector<double> neg(g.begin(), g.end());
                           for (auto& x : neg) x = -x;
                           accumulate(t, b, neg);
                         });
}

Var mul(Var a, Var b) {
  const Shape shape = broadcast_shape("mul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(shape_size(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[av.size() == 1 ? 0 : i] * bv[bv.size() == 1 ? 0 : i];
  }
  return a.tape().record("mul", Tensor(shape, std::move(out)), {a, b},
                         [a, b](Tape& t, std::span<const double> g, const Tensor&) {
                           const auto& av = a.value();
                           const auto& bv = b.value();
                           std::vector<double> ga(g.size()), gb(g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] = g[i] * bv[bv.size() == 1 ? 0 : i];
                             gb[i] = g[i] * av[av.size() == 1 ? 0 : i];
                           }
                           accumulate(t, a, ga);
                           accumulate(t, b, gb);
                         });
}

Var scale(Var a, double s) {
  std::vector<double> out(a.value().values());
  for (auto& x : out) x *= s;
  return a.tape().record("scale", Tensor(a.shape(), std::move(out)), {a},
                         [a, s](Tape& t, std::span<const double> g, const Tensor&) {
                           std::vector<double> ga(g.begin(), g.end());
                           for (auto& x : ga) x *= s;
                           accumulate(t, a, ga);
                         });
}

Var add_scalar(Var a, double s) {
  std::vector<double> out(a.value().values());
  for (auto& x : out) x += s;
  return a.tape().record("add_scalar", Tensor(a.shape(), std::move(out)), {a},
                         [a](Tape& t, std::span<const double> g, const Tensor&) { accumulate(t, a, g); });
}

Var square(Var a) {
  std::vector<double> out(a.value().values());
  for (auto& x : out) x *= x;
  return a.tape().record("square", Tensor(a.shape(), std::move(out)), {a},
                         [a](Tape& t, std::span<const double> g, const Tensor&) {
                           const auto& av = a.value();
                           std::vector<double> ga(g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] = 2.0 * av[i] * g[i];
                           accumulate(t, a, ga);
                         });
}

Var relu(Var a) {
  std::vector<double> out(a.value().values());
  for (auto& x : out) x = x > 0.0 ? x : 0.0;
  return a.tape().record("relu", Tensor(a.shape(), std::move(out)), {a},
                         [a](Tape& t, std::span<const double> g, const Tensor&) {
                           const auto& av = a.value();
                           std::vector<double> ga(g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] = av[i] > 0.0 ? g[i] : 0.0;
                           accumulate(t, a, ga);
                         });
}

Var linear(Var x, Var w, Var b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(1) ||
      wv.dim(0) != bv.dim(0)) {
    throw LayoutError("linear: incompatible shapes x" + shape_str(xv.shape()) + " w" +
                      shape_str(wv.shape()) + " b" + shape_str(bv.shape()));
  }
  const auto m = static_cast<Eigen::Index>(xv.dim(0));
  const auto in = static_cast<Eigen::Index>(xv.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(wv.dim(0));
  std::vector<double> out(static_cast<std::size_t>(m * out_dim));
  {
    ConstMat X(xv.data().data(), m, in);
    ConstMat W(wv.data().data(), out_dim, in);
    Mat Y(out.data(), m, out_dim);
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::RowVectorXd> bias(bv.data().data(), out_dim);
    Y.rowwise() += bias;
  }
  return x.tape().record(
      "linear", Tensor(Shape{xv.dim(0), wv.dim(0)}, std::move(out)), {x, w, b},
      [x, w, b, m, in, out_dim](Tape& t, std::span<const double> g, const Tensor&) {
        ConstMat G(g.data(), m, out_dim);
        if (t.requires_grad(x)) {
          Mat gx(t.grad_buffer(x).data(), m, in);
          gx.noalias() += G * ConstMat(w.value().data().data(), out_dim, in);
        }
        if (t.requires_grad(w)) {
          Mat gw(t.grad_buffer(w).data(), out_dim, in);
          gw.noalias() += G.transpose() * ConstMat(x.value().data().data(), m, in);
        }
        if (t.requires_grad(b)) {
          Eigen::Map<Eigen::RowVectorXd> gb(t.grad_buffer(b).data(), out_dim);
          gb += G.colwise().sum();
        }
      });
}

namespace {

void softmax_row(const double* in, double* out, std::size_t cols) {
  const double mx = *std::max_element(in, in + cols);
  double s = 0.0;
  for (std::size_t c = 0; c < cols; ++c) s += (out[c] = std::exp(in[c] - mx));
  for (std::size_t c = 0; c < cols; ++c) out[c] /= s;
}

}  // namespace

Var softmax_rows(Var z) {
  const auto& zv = z.value();
  const std::size_t rows = zv.rows();
  const std::size_t cols = zv.row_size();
  std::vector<double> out(zv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(zv.data().data() + r * cols, out.data() + r * cols, cols);
  }
  return z.tape().record(
      "softmax", Tensor(zv.shape(), std::move(out)), {z},
      [z, rows, cols](Tape& t, std::span<const double> g, const Tensor& p) {
        // dz = p * (g - <g, p>) row-wise
        std::vector<double> gz(g.size());
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * cols;
          double inner = 0.0;
          for (std::size_t c = 0; c < cols; ++c) inner += g[o + c] * p[o + c];
          for (std::size_t c = 0; c < cols; ++c) gz[o + c] = p[o + c] * (g[o + c] - inner);
        }
        accumulate(t, z, gz);
      });
}

Var log_softmax_rows(Var z) {
  const auto& zv = z.value();
  const std::size_t rows = zv.rows();
  const std::size_t cols = zv.row_size();
  std::vector<double> out(zv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = zv.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return z.tape().record(
      "log_softmax", Tensor(zv.shape(), std::move(out)), {z},
      [z, rows, cols](Tape& t, std::span<const double> g, const Tensor& logp) {
        // dz = g - softmax * sum(g) row-wise
        std::vector<double> gz(g.size());
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * cols;
          double total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) total += g[o + c];
          for (std::size_t c = 0; c < cols; ++c) gz[o + c] = g[o + c] - std::exp(logp[o + c]) * total;
        }
        accumulate(t, z, gz);
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const std::size_t n = a.value().size();
  return a.tape().record("sum", Tensor::scalar(s), {a},
                         [a, n](Tape& t, std::span<const double> g, const Tensor&) {
                           accumulate(t, a, std::vector<double>(n, g[0]));
                         });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(Var a, Var b) {
  require_same_shape("dot", a, b);
  return sum(mul(a, b));
}

namespace {

std::vector<Var> bind_params(Tape& tape, const ParamVector& at, bool track) {
  std::vector<Var> vars;
  vars.reserve(at.layout().entries().size());
  for (const auto& e : at.layout().entries()) {
    Tensor block = at.block_tensor(e);
    vars.push_back(track ? tape.variable(std::move(block)) : tape.constant(std::move(block)));
  }
  return vars;
}

}  // namespace

ValueAndGrad value_and_grad(const Objective& objective, const ParamVector& at) {
  Tape tape;
  const auto vars = bind_params(tape, at, true);
  const Var out = objective(tape, vars);
  if (out.value().size() != 1) {
    throw LayoutError("objective must return a scalar, got " + shape_str(out.shape()));
  }
  ParamVector g(at.layout());
  if (tape.requires_grad(out)) {
    tape.backward(out);
    const auto& entries = at.layout().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Tensor gi = tape.grad(vars[i]);
      std::copy(gi.data().begin(), gi.data().end(), g.block(entries[i]).begin());
    }
  }
  return {out.item(), std::move(g)};
}

ParamVector grad(const Objective& objective, const ParamVector& at) {
  return value_and_grad(objective, at).grad;
}

double evaluate(const Objective& objective, const ParamVector& at) {
  Tape tape;
  const auto vars = bind_params(tape, at, false);
  return objective(tape, vars).item();
}

ScalarFunction as_function(Objective objective) {
  return [objective = std::move(objective)](const ParamVector& p) { return evaluate(objective, p); };
}

ParamVector finite_diff_grad(const ScalarFunction& f, const ParamVector& at, double h) {
  if (!(h > 0.0)) throw PreconditionError("finite_diff_grad: step size must be positive");
  ParamVector g(at.layout());
  ParamVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + h;
    const double up = f(probe);
    probe[i] = at[i] - h;
    const double down = f(probe);
    probe[i] = at[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const ParamVector& a, const ParamVector& b) {
  a.require_same_layout(b, "relative_error");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / (1.0 + a.max_abs());
}

}  // namespace perinv::ad
