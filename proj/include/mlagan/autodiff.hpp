#pragma once

// Reverse-mode differentiation over a recorded tape of tensor ops.
//
// A Tape owns every intermediate value produced while building a loss. Nodes
// are appended in execution order, so a node's inputs always precede it and
// backward() can walk the tape from the loss towards the leaves. Gradients for
// Param leaves are accumulated into Param::grad; the tape itself is discarded
// after one backward pass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mlagan/error.hpp"
#include "mlagan/kernels.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan {

/// Trainable tensor plus its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { std::fill(grad.data().begin(), grad.data().end(), T{0}); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { record, off };

template <typename T>
class Tape {
 public:
  // Receives the output gradient and the node's own forward value.
  using BackwardFn =
      std::function<void(Tape&, const Tensor<T>& out_grad, const Tensor<T>& out_value)>;

  explicit Tape(GradMode mode = GradMode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == GradMode::record; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}, "constant"); }

  /// Leaf whose gradient is wanted (read back with grad()).
  Var<T> variable(Tensor<T> value) {
    return push(std::move(value), recording(), nullptr, {}, "variable");
  }

  /// Leaf bound to a Param; backward() adds into p.grad.
  Var<T> param(Param<T>& p) { return push(p.value, recording(), &p, {}, "param"); }

  /// Param used as a constant (frozen), e.g. the discriminator during a generator update.
  Var<T> frozen(const Param<T>& p) { return push(p.value, false, nullptr, {}, "param"); }

  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn fn) {
    return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn fn) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
    bool needs = false;
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw UsageError(std::string(op) + ": inputs live on another tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    needs = needs && recording();
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{}, op);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor<T>& value(const Var<T>& v) const { return value(v.id()); }
  bool requires_grad(const Var<T>& v) const { return nodes_.at(v.id()).requires_grad; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

  /// Adds g into the gradient of v; no-op when v does not require a gradient.
  void accumulate(const Var<T>& v, const Tensor<T>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
      throw DimensionError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                           shape_str(n.value.shape()) + " of " + n.op);
    }
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      T* dst = n.grad.ptr();
      const T* src = g.ptr();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
    }
  }

  /// Reverse sweep from a scalar loss. Param leaves receive their gradients.
  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw UsageError("backward: loss lives on another tape");
    if (loss.value().size() != 1) {
      throw UsageError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (!recording()) throw UsageError("backward: tape was built without gradient recording");
    if (swept_) throw UsageError("backward: tape already consumed");
    swept_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Tensor<T>::ones(loss.shape());
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad, n.value);
      if (n.param) {
        T* dst = n.param->grad.ptr();
        const T* src = n.grad.ptr();
        for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
      }
    }
  }

  /// Gradient of a node after backward(); zeros when nothing flowed into it.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    return n.grad.empty() ? Tensor<T>::zeros(n.value.shape()) : n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Param<T>* param = nullptr;
    BackwardFn backward;
    std::string op;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Param<T>* param, BackwardFn fn,
              const char* op) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, param, std::move(fn), op});
    return Var<T>(this, nodes_.size() - 1);
  }

  GradMode mode_;
  bool swept_ = false;
  // deque: node addresses stay stable while ops append
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives
// ---------------------------------------------------------------------------
namespace ad {

namespace detail {

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

// Output shape and input->output flat-index map for a reduction over `axes`.
inline std::pair<Shape, std::vector<std::size_t>> reduction_map(const Shape& shape,
                                                                 const std::vector<std::size_t>& axes) {
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t a : axes) {
    if (a >= shape.size()) {
      throw DimensionError("reduce: axis " + std::to_string(a) + " invalid for " + shape_str(shape));
    }
    if (reduced[a]) throw DimensionError("reduce: duplicate axis " + std::to_string(a));
    reduced[a] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);
  if (out_shape.empty()) out_shape = {1};

  const std::size_t total = shape_numel(shape);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (!reduced[d]) o = o * shape[d] + idx[d];
    map[flat] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return {out_shape, map};
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = a.tape();
  return tape.record("matmul", kernels::matmul(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                       if (t.requires_grad(a)) t.accumulate(a, kernels::matmul_nt(g, b.value()));
                       if (t.requires_grad(b)) t.accumulate(b, kernels::matmul_tn(a.value(), g));
                     });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  return a.tape().record("transpose", kernels::transpose(a.value()), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) { t.accumulate(a, kernels::transpose(g)); });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) { t.accumulate(a, g.reshaped(a.shape())); });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  return a.tape().record("add", detail::zip(a.value(), b.value(), [](T x, T y) { return x + y; }),
                         {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape().record("sub", detail::zip(a.value(), b.value(), [](T x, T y) { return x - y; }),
                         {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(a, g);
                           if (t.requires_grad(b)) t.accumulate(b, detail::map(g, [](T v) { return -v; }));
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mul");
  return a.tape().record("mul", detail::zip(a.value(), b.value(), [](T x, T y) { return x * y; }),
                         {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           if (t.requires_grad(a))
                             t.accumulate(a, detail::zip(g, b.value(), [](T u, T v) { return u * v; }));
                           if (t.requires_grad(b))
                             t.accumulate(b, detail::zip(g, a.value(), [](T u, T v) { return u * v; }));
                         });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return a.tape().record("scale", detail::map(a.value(), [s](T x) { return s * x; }), {a},
                         [a, s](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(a, detail::map(g, [s](T v) { return s * v; }));
                         });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return a.tape().record("add_scalar", detail::map(a.value(), [s](T x) { return x + s; }), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) { t.accumulate(a, g); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return a.tape().record("relu", detail::map(a.value(), [](T x) { return x > T{0} ? x : T{0}; }), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(a, detail::zip(g, a.value(),
                                                       [](T u, T x) { return x > T{0} ? u : T{0}; }));
                         });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T alpha) {
  return a.tape().record(
      "leaky_relu", detail::map(a.value(), [alpha](T x) { return x > T{0} ? x : alpha * x; }), {a},
      [a, alpha](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        t.accumulate(a, detail::zip(g, a.value(), [alpha](T u, T x) { return x > T{0} ? u : alpha * u; }));
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> y = detail::map(a.value(), [](T x) {
    // split by sign so exp never overflows
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
  });
  return a.tape().record("sigmoid", std::move(y), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                           t.accumulate(a, detail::zip(g, y, [](T u, T s) { return u * s * (T{1} - s); }));
                         });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return a.tape().record("tanh", detail::map(a.value(), [](T x) { return std::tanh(x); }), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                           t.accumulate(a, detail::zip(g, y, [](T u, T s) { return u * (T{1} - s * s); }));
                         });
}

/// |x|, with subgradient 0 at the kink.
template <typename T>
Var<T> abs(const Var<T>& a) {
  return a.tape().record("abs", detail::map(a.value(), [](T x) { return std::abs(x); }), {a},
                         [a](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(a, detail::zip(g, a.value(), [](T u, T x) {
                                          return x > T{0} ? u : (x < T{0} ? -u : T{0});
                                        }));
                         });
}

/// ln(clamp(x, eps, 1 - eps)); zero gradient where the clamp is active.
template <typename T>
Var<T> log_clamped(const Var<T>& a, T eps) {
  const T lo = eps, hi = T{1} - eps;
  return a.tape().record(
      "log_clamped", detail::map(a.value(), [lo, hi](T x) { return std::log(std::clamp(x, lo, hi)); }),
      {a}, [a, lo, hi](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        t.accumulate(a, detail::zip(g, a.value(), [lo, hi](T u, T x) {
                       return (x > lo && x < hi) ? u / x : T{0};
                     }));
      });
}

template <typename T>
Var<T> sum(const Var<T>& a, const std::vector<std::size_t>& axes) {
  auto [out_shape, map] = detail::reduction_map(a.shape(), axes);
  Tensor<T> out(out_shape);
  const Tensor<T>& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[map[i]] += x[i];
  return a.tape().record("sum", std::move(out), {a},
                         [a, map = std::move(map)](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           Tensor<T> dx(a.shape());
                           for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[map[i]];
                           t.accumulate(a, dx);
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a, const std::vector<std::size_t>& axes) {
  Var<T> s = sum(a, axes);
  const T count = static_cast<T>(a.value().size() / s.value().size());
  return scale(s, T{1} / count);
}

template <typename T>
std::vector<std::size_t> all_axes(const Var<T>& a) {
  std::vector<std::size_t> axes(a.shape().size());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return axes;
}

template <typename T>
Var<T> sum(const Var<T>& a) { return sum(a, all_axes(a)); }

template <typename T>
Var<T> mean(const Var<T>& a) { return mean(a, all_axes(a)); }

namespace detail {
// extents before, at and after `axis`
inline std::array<std::size_t, 3> split_extents(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  return {outer, s[axis], inner};
}
}  // namespace detail

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: invalid axis " + std::to_string(axis));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) ok = false;
    if (!ok) {
      throw DimensionError("concat: extent mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  const auto [outer, total_axis, inner] = detail::split_extents(out_shape, axis);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.shape()[axis];
    const T* src = p.value().ptr();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * len * inner, len * inner, out.ptr() + (o * total_axis + off) * inner);
    off += len;
  }
  return parts.front().tape().record(
      "concat", std::move(out), parts,
      [parts, offsets, axis, outer = outer, total_axis = total_axis, inner = inner](
          Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (!t.requires_grad(parts[k])) continue;
          const std::size_t len = parts[k].shape()[axis];
          Tensor<T> dx(parts[k].shape());
          for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(g.ptr() + (o * total_axis + offsets[k]) * inner, len * inner,
                        dx.ptr() + o * len * inner);
          t.accumulate(parts[k], dx);
        }
      });
}

/// Sub-range [begin, begin + len) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin, std::size_t len) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("slice: invalid axis " + std::to_string(axis));
  if (len == 0 || begin + len > s[axis]) {
    throw DimensionError("slice: range out of bounds for " + shape_str(s));
  }
  const auto [outer, total_axis, inner] = detail::split_extents(s, axis);
  Shape out_shape = s;
  out_shape[axis] = len;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().ptr() + (o * total_axis + begin) * inner, len * inner,
                out.ptr() + o * len * inner);
  return a.tape().record("slice", std::move(out), {a},
                         [a, begin, len, outer = outer, total_axis = total_axis, inner = inner](
                             Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           Tensor<T> dx(a.shape());
                           for (std::size_t o = 0; o < outer; ++o)
                             std::copy_n(g.ptr() + o * len * inner, len * inner,
                                         dx.ptr() + (o * total_axis + begin) * inner);
                           t.accumulate(a, dx);
                         });
}

/// Splits `axis` into `parts` equal blocks; inverse of concat.
template <typename T>
std::vector<Var<T>> split(const Var<T>& a, std::size_t axis, std::size_t parts) {
  if (axis >= a.shape().size()) throw DimensionError("split: invalid axis " + std::to_string(axis));
  const std::size_t extent = a.shape()[axis];
  if (parts == 0 || extent % parts != 0) {
    throw DimensionError("split: extent " + std::to_string(extent) + " not divisible into " +
                         std::to_string(parts) + " parts");
  }
  const std::size_t len = extent / parts;
  std::vector<Var<T>> out;
  for (std::size_t p = 0; p < parts; ++p) out.push_back(slice(a, axis, p * len, len));
  return out;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::size_t stride, std::size_t pad) {
  return x.tape().record(
      "conv2d", kernels::conv2d(x.value(), w.value(), stride, pad), {x, w},
      [x, w, stride, pad](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        const auto geo = kernels::conv_geometry(x.value(), w.value(), stride, pad);
        const std::size_t co = w.shape()[0];
        const Tensor<T> gmat = g.reshaped({co, geo.out_h * geo.out_w});
        if (t.requires_grad(x)) t.accumulate(x, kernels::conv2d_transpose(g, w.value(), stride, pad));
        if (t.requires_grad(w)) {
          t.accumulate(w, kernels::matmul_nt(gmat, kernels::im2col(x.value(), geo)).reshaped(w.shape()));
        }
      });
}

template <typename T>
Var<T> conv2d_transpose(const Var<T>& y, const Var<T>& w, std::size_t stride, std::size_t pad) {
  return y.tape().record(
      "conv2d_transpose", kernels::conv2d_transpose(y.value(), w.value(), stride, pad), {y, w},
      [y, w, stride, pad](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        if (t.requires_grad(y)) t.accumulate(y, kernels::conv2d(g, w.value(), stride, pad));
        if (t.requires_grad(w)) {
          const auto geo = kernels::conv_transpose_geometry(y.value(), w.value(), stride, pad);
          const std::size_t co = w.shape()[0];
          const Tensor<T> ymat = y.value().reshaped({co, geo.out_h * geo.out_w});
          t.accumulate(w, kernels::matmul_nt(ymat, kernels::im2col(g, geo)).reshaped(w.shape()));
        }
      });
}

/// x[C×H×W] + b[C] broadcast over the spatial extents.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  const Shape& s = x.shape();
  if (s.size() != 3 || b.shape() != Shape{s[0]}) {
    throw DimensionError("add_channel_bias: " + shape_str(s) + " with bias " + shape_str(b.shape()));
  }
  const std::size_t hw = s[1] * s[2];
  Tensor<T> out = x.value();
  for (std::size_t c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] += b.value()[c];
  return x.tape().record("add_channel_bias", std::move(out), {x, b},
                         [x, b, hw](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                           t.accumulate(x, g);
                           if (!t.requires_grad(b)) return;
                           Tensor<T> db(b.shape());
                           for (std::size_t c = 0; c < db.size(); ++c)
                             for (std::size_t i = 0; i < hw; ++i) db[c] += g[c * hw + i];
                           t.accumulate(b, db);
                         });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  return x.tape().record("softmax_rows", kernels::softmax_rows(x.value()), {x},
                         [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                           const std::size_t n = y.dim(0), m = y.dim(1);
                           Tensor<T> dx(y.shape());
                           for (std::size_t i = 0; i < n; ++i) {
                             T dot{0};
                             for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * y[i * m + j];
                             for (std::size_t j = 0; j < m; ++j)
                               dx[i * m + j] = y[i * m + j] * (g[i * m + j] - dot);
                           }
                           t.accumulate(x, dx);
                         });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, T eps) {
  return x.tape().record(
      "l2_normalize_rows", kernels::l2_normalize_rows(x.value(), eps), {x},
      [x, eps](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
        const std::vector<T> norms = kernels::row_norms(x.value());
        const std::size_t d = y.dim(1);
        Tensor<T> dx(y.shape());
        for (std::size_t i = 0; i < norms.size(); ++i) {
          const T* gi = g.ptr() + i * d;
          const T* yi = y.ptr() + i * d;
          T* di = dx.ptr() + i * d;
          if (norms[i] >= eps) {
            T dot{0};
            for (std::size_t j = 0; j < d; ++j) dot += yi[j] * gi[j];
            for (std::size_t j = 0; j < d; ++j) di[j] = (gi[j] - yi[j] * dot) / norms[i];
          } else {
            for (std::size_t j = 0; j < d; ++j) di[j] = gi[j] / eps;
          }
        }
        t.accumulate(x, dx);
      });
}

}  // namespace ad
}  // namespace mlagan
