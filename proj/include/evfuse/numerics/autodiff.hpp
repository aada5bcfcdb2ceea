#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evfuse/error.hpp"
#include "evfuse/numerics/special.hpp"
#include "evfuse/numerics/tensor.hpp"

namespace evfuse::ad {

/// Trainable leaf. Owned by the model; a Tape only refers to it.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value) : name_(std::move(name)), value_(std::move(value)) {}

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }

 private:
  std::string name_;
  Tensor value_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Gradients of a scalar with respect to the parameters that reached it, in tape order.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const {
    for (const auto& [param, grad] : entries_) {
      if (param == &p) return &grad;
    }
    return nullptr;
  }
  const Tensor& at(const Parameter& p) const {
    if (const auto* g = find(p)) return *g;
    throw ContractError("Gradients: parameter '" + p.name() + "' does not reach the loss");
  }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<const Parameter*, Tensor>>& entries() const { return entries_; }

 private:
  friend class Tape;
  std::vector<std::pair<const Parameter*, Tensor>> entries_;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so the
/// node vector is already a topological order.
class Tape {
 public:
  /// Receives the node's own forward value and the gradient flowing into it.
  using BackwardFn = std::function<void(Tape&, const Tensor& out, const Tensor& grad)>;

  /// With `track_parameters == false` parameters enter as constants (inference mode).
  explicit Tape(bool track_parameters = true) : track_parameters_(track_parameters) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
    return Var(this, nodes_.size() - 1);
  }

  Var parameter(const Parameter& p) {
    if (!track_parameters_) return constant(p.value());
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    nodes_.push_back(Node{p.value(), {}, nullptr, &p, true});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Appends an op node. `parents` decide whether the node needs a gradient at all.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(parents), std::move(fn));
  }
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) {
      if (p.tape_ != this) throw ContractError("Tape: operand belongs to a different tape");
      needs = needs || nodes_[p.index_].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : nullptr, nullptr, needs});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(const Var& v) const { return nodes_[v.index_].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.index_].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Zero-initialised gradient buffer of `v`, or nullptr when `v` needs no gradient.
  Tensor* grad_buffer(const Var& v) {
    auto& node = nodes_[v.index_];
    if (!node.requires_grad) return nullptr;
    if (node.grad.empty()) node.grad = Tensor(node.value.rows(), node.value.cols(), 0.0);
    return &node.grad;
  }

  /// Reverse sweep from a 1x1 node. Clears previous gradients first, so repeated calls
  /// on one tape give identical results.
  Gradients backward(const Var& loss) {
    if (loss.tape_ != this) throw ContractError("backward: loss belongs to a different tape");
    const auto& lv = nodes_[loss.index_].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be a scalar, got " + shape_string(lv));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    Gradients out;
    if (!nodes_[loss.index_].requires_grad) return out;
    nodes_[loss.index_].grad = Tensor::scalar(1.0);
    for (std::size_t i = loss.index_ + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(*this, node.value, node.grad);
    }
    for (std::size_t i = 0; i <= loss.index_; ++i) {
      auto& node = nodes_[i];
      if (node.param != nullptr && !node.grad.empty()) out.entries_.emplace_back(node.param, node.grad);
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    const Parameter* param;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool track_parameters_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------------------
// Elementwise machinery

namespace detail {

inline void check_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands belong to different tapes");
}

inline std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ContractError(std::string(op) + ": shapes do not broadcast (" + std::to_string(a) +
                      " vs " + std::to_string(b) + ")");
}

template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(std::move(out), {x}, [x, df](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += g[i] * df(xv[i], y[i]);
  });
}

/// Binary op with numpy-style broadcasting restricted to rank-2 operands.
/// `da(a, b, y)` and `db(a, b, y)` are the partial derivatives of y = f(a, b).
template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
  check_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t rows = broadcast_dim(av.rows(), bv.rows(), name);
  const std::size_t cols = broadcast_dim(av.cols(), bv.cols(), name);
  Tensor out(rows, cols);
  const bool ar = av.rows() == 1, ac = av.cols() == 1, br = bv.rows() == 1, bc = bv.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = f(av(ar ? 0 : r, ac ? 0 : c), bv(br ? 0 : r, bc ? 0 : c));
    }
  }
  return a.tape().record(
      std::move(out), {a, b},
      [a, b, da, db, ar, ac, br, bc](Tape& t, const Tensor& y, const Tensor& g) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        Tensor* ga = t.grad_buffer(a);
        Tensor* gb = t.grad_buffer(b);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          for (std::size_t c = 0; c < y.cols(); ++c) {
            const std::size_t arr = ar ? 0 : r, acc = ac ? 0 : c;
            const std::size_t brr = br ? 0 : r, bcc = bc ? 0 : c;
            const double x1 = av(arr, acc), x2 = bv(brr, bcc), yy = y(r, c), gg = g(r, c);
            if (ga != nullptr) (*ga)(arr, acc) += gg * da(x1, x2, yy);
            if (gb != nullptr) (*gb)(brr, bcc) += gg * db(x1, x2, yy);
          }
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Arithmetic

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

/// x * ln(y), defined as 0 wherever x == 0 (so 0 log 0 = 0).
inline Var xlogy(const Var& x, const Var& y) {
  return detail::binary(
      x, y, "xlogy", [](double a, double b) { return a == 0.0 ? 0.0 : a * std::log(b); },
      [](double a, double b, double) { return a == 0.0 ? 0.0 : std::log(b); },
      [](double a, double b, double) { return a == 0.0 ? 0.0 : a / b; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

inline Var scale(const Var& x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var add_scalar(const Var& x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

/// c - x
inline Var rsub_scalar(double c, const Var& x) {
  return detail::unary(x, [c](double v) { return c - v; }, [](double, double) { return -1.0; });
}

/// c / x
inline Var rdiv_scalar(double c, const Var& x) {
  return detail::unary(
      x, [c](double v) { return c / v; }, [](double v, double y) { return -y / v; });
}

inline Var neg(const Var& x) { return scale(x, -1.0); }

inline Var square(const Var& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var exp(const Var& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var softplus(const Var& x) {
  return detail::unary(
      x, [](double v) { return special::softplus(v); },
      [](double v, double) { return special::sigmoid(v); });
}

inline Var leaky_relu(const Var& x, double slope) {
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Var lgamma(const Var& x) {
  return detail::unary(
      x, [](double v) { return special::lgamma(v); },
      [](double v, double) { return special::digamma(v); });
}

inline Var digamma(const Var& x) {
  return detail::unary(
      x, [](double v) { return special::digamma(v); },
      [](double v, double) { return special::trigamma(v); });
}

/// Clamp to [lo, hi]; the gradient is zero outside the interval.
inline Var clamp(const Var& x, double lo, double hi) {
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------------------
// Linear algebra and structure

inline Var matmul(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ContractError("matmul: inner dimensions differ (" + shape_string(av) + " * " +
                        shape_string(bv) + ")");
  }
  Tensor out(av.rows(), bv.cols());
  out.mat().noalias() = av.mat() * bv.mat();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) ga->mat().noalias() += g.mat() * b.value().mat().transpose();
    if (Tensor* gb = t.grad_buffer(b)) gb->mat().noalias() += a.value().mat().transpose() * g.mat();
  });
}

/// Row sums: (n x k) -> (n x 1).
inline Var row_sum(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) s += xv(r, c);
    out(r, 0) = s;
  }
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < gx->rows(); ++r)
      for (std::size_t c = 0; c < gx->cols(); ++c) (*gx)(r, c) += g(r, 0);
  });
}

/// Sum of every entry -> 1x1.
inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    for (auto& v : gx->values()) v += g[0];
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(offset, p.cols()) = p.value().mat();
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts,
                                     [parts](Tape& t, const Tensor&, const Tensor& g) {
                                       std::size_t off = 0;
                                       for (const auto& p : parts) {
                                         if (Tensor* gp = t.grad_buffer(p))
                                           gp->mat() += g.mat().middleCols(off, p.cols());
                                         off += p.cols();
                                       }
                                     });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) throw ContractError("slice_cols: range exceeds column count");
  Tensor out(x.rows(), count);
  out.mat() = x.value().mat().middleCols(begin, count);
  return x.tape().record(std::move(out), {x},
                         [x, begin, count](Tape& t, const Tensor&, const Tensor& g) {
                           t.grad_buffer(x)->mat().middleCols(begin, count) += g.mat();
                         });
}

}  // namespace evfuse::ad
