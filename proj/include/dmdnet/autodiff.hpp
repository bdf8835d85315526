#pragma once

// Reverse-mode differentiation over a fixed set of dense/sparse tensor ops.
//
// A Tape owns every value produced during a forward pass. Ops are free
// functions taking and returning Var handles; each records its adjoint rule.
// Nodes whose inputs are all constants record no adjoint. Every op output is
// checked for NaN/Inf and raises NumericalFault.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dmdnet/error.hpp"
#include "dmdnet/sparse.hpp"
#include "dmdnet/tensor.hpp"

namespace dmdnet::ad {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}); }
  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), true, {}); }

  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward() target; zeros if the node was not reached.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor<T>(n.value.shape(), T{0});
    return n.grad;
  }

  // Mutable gradient buffer of node `id`, allocated on first use; nullptr for
  // nodes that do not require a gradient.
  T* grad_data(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape(), T{0});
    return n.grad.data().data();
  }

  void backward(Var<T> loss) {
    if (nodes_.at(loss.id).value.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " +
                       shape_string(nodes_[loss.id].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor<T>();
    if (!nodes_[loss.id].requires_grad) return;
    grad_data(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Number of acos inputs that fell outside [-1, 1].
  std::size_t acos_clamp_count = 0;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, Backward backward) {
    if (!value.all_finite()) throw NumericalFault(std::string(op) + " produced a non-finite value");
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(backward), requires_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> as_matrix(const Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<RowMat<T>> as_matrix(T* data, std::size_t rows, std::size_t cols) {
  return {data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline void require(bool ok, std::string_view op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
std::string shapes(const Tensor<T>& a, const Tensor<T>& b) {
  return shape_string(a.shape()) + " vs " + shape_string(b.shape());
}

// Elementwise unary op: forward f(x), derivative df(x, y).
template <typename T, typename F, typename DF>
Var<T> unary(std::string_view op, Var<T> x, F f, DF df) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape->record(op, std::move(out), {x}, [x, df](Tape<T>& tape, const Tensor<T>& g) {
    T* gx = tape.grad_data(x.id);
    if (!gx) return;
    const Tensor<T>& xv = tape.value(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * df(xv[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(), "matmul",
                  detail::shapes(av, bv));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out({m, n});
  detail::as_matrix(out.data().data(), m, n).noalias() = detail::as_matrix(av) * detail::as_matrix(bv);
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tape, const Tensor<T>& g) {
    const auto gm = detail::as_matrix(g);
    if (T* ga = tape.grad_data(a.id))
      detail::as_matrix(ga, m, k).noalias() += gm * detail::as_matrix(tape.value(b)).transpose();
    if (T* gb = tape.grad_data(b.id))
      detail::as_matrix(gb, k, n).noalias() += detail::as_matrix(tape.value(a)).transpose() * gm;
  });
}

// S * X for a constant sparse operator S.
template <typename T>
Var<T> spmm(std::shared_ptr<const SparseMatrix> s, Var<T> x) {
  const Tensor<T>& xv = x.value();
  detail::require(xv.rank() == 2 && s->cols() == xv.rows(), "spmm",
                  "operator " + std::to_string(s->rows()) + "x" + std::to_string(s->cols()) +
                      " vs " + shape_string(xv.shape()));
  const std::size_t k = xv.cols();
  Tensor<T> out({s->rows(), k});
  s->multiply<T>(xv.data(), k, out.data());
  return x.tape->record("spmm", std::move(out), {x}, [s, x, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id))
      s->multiply_transpose_add<T>(g.data(), k, std::span<T>(gx, s->cols() * k));
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape(), "add", detail::shapes(av, bv));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (T* ga = tape.grad_data(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape(), "sub", detail::shapes(av, bv));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (T* ga = tape.grad_data(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape(), "mul", detail::shapes(av, bv));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (T* ga = tape.grad_data(a.id)) {
      const Tensor<T>& bv = tape.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (T* gb = tape.grad_data(b.id)) {
      const Tensor<T>& av = tape.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape(), "div", detail::shapes(av, bv));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  return a.tape->record("div", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    if (T* ga = tape.grad_data(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
  });
}

// X (n x k) + b (1 x k) broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  detail::require(xv.rank() == 2 && bv.size() == xv.cols(), "add_row", detail::shapes(xv, bv));
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) += bv[j];
  return x.tape->record("add_row", std::move(out), {x, b}, [x, b, n, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gb[j] += g[i * k + j];
  });
}

// ---------------------------------------------------------------------------
// Scalar affine

template <typename T>
Var<T> scale(Var<T> x, T s) {
  return detail::unary<T>("scale", x, [s](T v) { return s * v; }, [s](T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T s) {
  return detail::unary<T>("add_scalar", x, [s](T v) { return v + s; }, [](T) { return T{1}; });
}

// ---------------------------------------------------------------------------
// Elementwise unary

// Subgradient at 0 is 0.
template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v) { return v > T{0} ? T{1} : T{0}; });
}

// Subgradient at 0 is 0.
template <typename T>
Var<T> abs(Var<T> x) {
  return detail::unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

// Derivative at 0 is taken as 0.
template <typename T>
Var<T> sqrt(Var<T> x) {
  return detail::unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); },
      [](T v) { return v > T{0} ? T{0.5} / std::sqrt(v) : T{0}; });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

// acos with the input clamped to [-1, 1]; inputs outside that range are
// counted in Tape::acos_clamp_count. The adjoint evaluates the derivative at
// the input clamped to [-1 + eps, 1 - eps] so it stays finite.
template <typename T>
Var<T> acos_clamped(Var<T> x, T eps = T(1e-7)) {
  for (T v : x.value().data())
    if (v < T{-1} || v > T{1}) ++x.tape->acos_clamp_count;
  const T lo = T{-1} + eps, hi = T{1} - eps;
  return detail::unary<T>(
      "acos", x, [](T v) { return std::acos(std::clamp(v, T{-1}, T{1})); },
      [lo, hi](T v) {
        const T c = std::clamp(v, lo, hi);
        return T{-1} / std::sqrt(T{1} - c * c);
      });
}

// Elementwise atan2(y, x); derivative at the origin is taken as 0.
template <typename T>
Var<T> atan2(Var<T> y, Var<T> x) {
  const Tensor<T>& yv = y.value();
  const Tensor<T>& xv = x.value();
  detail::require(yv.shape() == xv.shape(), "atan2", detail::shapes(yv, xv));
  Tensor<T> out(yv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::atan2(yv[i], xv[i]);
  return y.tape->record("atan2", std::move(out), {y, x}, [y, x](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& yv = tape.value(y);
    const Tensor<T>& xv = tape.value(x);
    T* gy = tape.grad_data(y.id);
    T* gx = tape.grad_data(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T r2 = xv[i] * xv[i] + yv[i] * yv[i];
      if (r2 == T{0}) continue;
      if (gy) gy[i] += g[i] * xv[i] / r2;
      if (gx) gx[i] -= g[i] * yv[i] / r2;
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Var<T> concat_columns(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_columns", "no inputs");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.value().rank() == 2 && p.rows() == n, "concat_columns",
                    "row count mismatch " + shape_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor<T> out({n, total});
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Tensor<T>& pv = parts[q].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pv.data().data() + i * widths[q], widths[q], out.data().data() + i * total + offset);
    offset += widths[q];
  }
  return parts.front().tape->record(
      "concat_columns", std::move(out), parts, [parts, widths, n, total](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (std::size_t q = 0; q < parts.size(); ++q) {
          if (T* gp = tape.grad_data(parts[q].id))
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < widths[q]; ++j) gp[i * widths[q] + j] += g[i * total + offset + j];
          offset += widths[q];
        }
      });
}

// Rows of X selected by `indices` (repeats allowed).
template <typename T>
Var<T> row_gather(Var<T> x, std::shared_ptr<const std::vector<std::size_t>> indices) {
  const Tensor<T>& xv = x.value();
  const std::size_t k = xv.cols();
  Tensor<T> out({indices->size(), k});
  for (std::size_t r = 0; r < indices->size(); ++r) {
    detail::require((*indices)[r] < xv.rows(), "row_gather", "index out of range");
    std::copy_n(xv.data().data() + (*indices)[r] * k, k, out.data().data() + r * k);
  }
  return x.tape->record("row_gather", std::move(out), {x}, [x, indices, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id))
      for (std::size_t r = 0; r < indices->size(); ++r)
        for (std::size_t j = 0; j < k; ++j) gx[(*indices)[r] * k + j] += g[r * k + j];
  });
}

template <typename T>
Var<T> row_gather(Var<T> x, std::vector<std::size_t> indices) {
  return row_gather(x, std::make_shared<const std::vector<std::size_t>>(std::move(indices)));
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

// Column means of an n x k matrix, returned as 1 x k.
template <typename T>
Var<T> mean_over_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), k = xv.cols();
  detail::require(n > 0, "mean_over_rows", "no rows");
  Tensor<T> out({1, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += xv[i * k + j];
  for (std::size_t j = 0; j < k; ++j) out[j] /= static_cast<T>(n);
  return x.tape->record("mean_over_rows", std::move(out), {x}, [x, n, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id)) {
      const T inv = T{1} / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += g[j] * inv;
    }
  });
}

// Mean over one axis of a rank-3 tensor, returning the rank-2 remainder.
// With `sorted`, the values along the axis are summed in descending order and
// then divided by their count, so the result does not depend on their order.
template <typename T>
Var<T> mean_over_axis(Var<T> x, std::size_t axis, bool sorted = false) {
  const Tensor<T>& xv = x.value();
  detail::require(xv.rank() == 3 && axis < 3, "mean_over_axis", "needs rank 3, got " + shape_string(xv.shape()));
  const std::size_t d0 = xv.dim(0), d1 = xv.dim(1), d2 = xv.dim(2);
  const std::size_t dims[3] = {d0, d1, d2};
  Shape out_shape;
  for (std::size_t a = 0; a < 3; ++a)
    if (a != axis) out_shape.push_back(dims[a]);
  Tensor<T> out(out_shape);
  const T inv = T{1} / static_cast<T>(dims[axis]);
  auto out_index = [axis, d1, d2](std::size_t i, std::size_t j, std::size_t l) {
    switch (axis) {
      case 0: return j * d2 + l;
      case 1: return i * d2 + l;
      default: return i * d1 + j;
    }
  };
  if (sorted) {
    std::vector<std::vector<T>> groups(out.size());
    for (std::size_t i = 0; i < d0; ++i)
      for (std::size_t j = 0; j < d1; ++j)
        for (std::size_t l = 0; l < d2; ++l) groups[out_index(i, j, l)].push_back(xv[(i * d1 + j) * d2 + l]);
    for (std::size_t o = 0; o < groups.size(); ++o) {
      std::sort(groups[o].begin(), groups[o].end(), std::greater<T>());
      T sum{0};
      for (T v : groups[o]) sum += v;
      out[o] = sum / static_cast<T>(dims[axis]);
    }
  } else {
    for (std::size_t i = 0; i < d0; ++i)
      for (std::size_t j = 0; j < d1; ++j)
        for (std::size_t l = 0; l < d2; ++l) out[out_index(i, j, l)] += xv[(i * d1 + j) * d2 + l] * inv;
  }
  return x.tape->record("mean_over_axis", std::move(out), {x},
                        [x, d0, d1, d2, inv, out_index](Tape<T>& tape, const Tensor<T>& g) {
                          if (T* gx = tape.grad_data(x.id))
                            for (std::size_t i = 0; i < d0; ++i)
                              for (std::size_t j = 0; j < d1; ++j)
                                for (std::size_t l = 0; l < d2; ++l)
                                  gx[(i * d1 + j) * d2 + l] += g[out_index(i, j, l)] * inv;
                        });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  const Tensor<T>& xv = x.value();
  T s{0};
  for (T v : xv.data()) s += v;
  return x.tape->record("sum_all", Tensor<T>::scalar(s), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id)) {
      const std::size_t count = tape.value(x).size();
      for (std::size_t i = 0; i < count; ++i) gx[i] += g[0];
    }
  });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  return scale(sum_all(x), T{1} / static_cast<T>(x.value().size()));
}

// Row sums of an n x k matrix as n x 1.
template <typename T>
Var<T> sum_columns(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor<T> out({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += xv[i * k + j];
  return x.tape->record("sum_columns", std::move(out), {x}, [x, n, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Row-vector geometry

template <typename T>
Var<T> squared_norm_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor<T> out({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += xv[i * k + j] * xv[i * k + j];
  return x.tape->record("squared_norm_rows", std::move(out), {x}, [x, n, k](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id)) {
      const Tensor<T>& xv = tape.value(x);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += T{2} * g[i] * xv[i * k + j];
    }
  });
}

// Euclidean row norms (n x 1); zero rows get a zero derivative.
template <typename T>
Var<T> norm_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor<T> out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    for (std::size_t j = 0; j < k; ++j) s += xv[i * k + j] * xv[i * k + j];
    out[i] = std::sqrt(s);
  }
  return x.tape->record("norm_rows", out, {x}, [x, n, k, out](Tape<T>& tape, const Tensor<T>& g) {
    if (T* gx = tape.grad_data(x.id)) {
      const Tensor<T>& xv = tape.value(x);
      for (std::size_t i = 0; i < n; ++i) {
        if (out[i] == T{0}) continue;
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += g[i] * xv[i * k + j] / out[i];
      }
    }
  });
}

template <typename T>
Var<T> dot_rows(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape(), "dot_rows", detail::shapes(av, bv));
  const std::size_t n = av.rows(), k = av.cols();
  Tensor<T> out({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += av[i * k + j] * bv[i * k + j];
  return a.tape->record("dot_rows", std::move(out), {a, b}, [a, b, n, k](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    if (T* ga = tape.grad_data(a.id))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += g[i] * bv[i * k + j];
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gb[i * k + j] += g[i] * av[i * k + j];
  });
}

template <typename T>
Var<T> cross_product_rows(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.shape() == bv.shape() && av.rank() == 2 && av.cols() == 3, "cross_product_rows",
                  detail::shapes(av, bv));
  const std::size_t n = av.rows();
  auto cross = [](const T* u, const T* v, T* w) {
    w[0] = u[1] * v[2] - u[2] * v[1];
    w[1] = u[2] * v[0] - u[0] * v[2];
    w[2] = u[0] * v[1] - u[1] * v[0];
  };
  Tensor<T> out({n, 3});
  for (std::size_t i = 0; i < n; ++i) cross(&av[i * 3], &bv[i * 3], &out[i * 3]);
  return a.tape->record("cross_product_rows", std::move(out), {a, b}, [a, b, n, cross](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    T tmp[3];
    // d(a x b) with adjoint g: ga = b x g, gb = g x a.
    if (T* ga = tape.grad_data(a.id))
      for (std::size_t i = 0; i < n; ++i) {
        cross(&bv[i * 3], &g[i * 3], tmp);
        for (int c = 0; c < 3; ++c) ga[i * 3 + c] += tmp[c];
      }
    if (T* gb = tape.grad_data(b.id))
      for (std::size_t i = 0; i < n; ++i) {
        cross(&g[i * 3], &av[i * 3], tmp);
        for (int c = 0; c < 3; ++c) gb[i * 3 + c] += tmp[c];
      }
  });
}

// Rows scaled to unit length; zero rows stay zero with zero derivative.
template <typename T>
Var<T> normalize_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), k = xv.cols();
  std::vector<T> norms(n, T{0});
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    for (std::size_t j = 0; j < k; ++j) s += xv[i * k + j] * xv[i * k + j];
    norms[i] = std::sqrt(s);
    if (norms[i] > T{0})
      for (std::size_t j = 0; j < k; ++j) out[i * k + j] = xv[i * k + j] / norms[i];
  }
  Tensor<T> unit = out;
  return x.tape->record("normalize_rows", std::move(out), {x},
                        [x, n, k, norms = std::move(norms), unit = std::move(unit)](Tape<T>& tape, const Tensor<T>& g) {
                          T* gx = tape.grad_data(x.id);
                          if (!gx) return;
                          // (g - (g . u) u) / |x|
                          for (std::size_t i = 0; i < n; ++i) {
                            if (norms[i] == T{0}) continue;
                            T gu{0};
                            for (std::size_t j = 0; j < k; ++j) gu += g[i * k + j] * unit[i * k + j];
                            for (std::size_t j = 0; j < k; ++j)
                              gx[i * k + j] += (g[i * k + j] - gu * unit[i * k + j]) / norms[i];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Operators for readability

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }

}  // namespace dmdnet::ad
