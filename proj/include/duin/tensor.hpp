#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding shape, values and an optional
// gradient buffer. Operations executed while a Tape is alive (and with at least
// one input that requires grad) are recorded on that tape; Tape::backward then
// replays the recorded closures in reverse order.
//
// Broadcasting rule for binary ops: shapes are aligned at their trailing
// dimensions; each aligned pair must be equal or one of them must be 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "duin/errors.hpp"

namespace duin {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
};

template <class Real>
class Tensor {
 public:
  using Node = TensorNode<Real>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor full(Shape shape, Real v, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), Real(0), requires_grad); }
  static Tensor ones(Shape shape, bool requires_grad = false) { return full(std::move(shape), Real(1), requires_grad); }
  static Tensor scalar(Real v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }
  static Tensor of(Shape shape, std::initializer_list<Real> values, bool requires_grad = false) {
    return Tensor(std::move(shape), std::vector<Real>(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const Real> data() const { return node_->value; }
  std::span<Real> data() { return node_->value; }
  const std::vector<Real>& values() const { return node_->value; }

  /// Gradient buffer; empty until a backward pass reaches this tensor.
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), Real(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->is_leaf; }

  Real item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  Real operator[](std::size_t i) const { return node_->value[i]; }

  /// Copy of the values with no autograd history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <class Real>
class Tape;

namespace detail {
template <class Real>
inline thread_local Tape<Real>* active_tape = nullptr;
}  // namespace detail

/// Records differentiable ops executed on this thread while in scope.
/// Scopes nest; the innermost live tape is the active one.
template <class Real>
class Tape {
 public:
  using Node = TensorNode<Real>;

  Tape() : previous_(detail::active_tape<Real>) { detail::active_tape<Real> = this; }
  ~Tape() { detail::active_tape<Real> = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return detail::active_tape<Real>; }

  void record(std::shared_ptr<Node> out, std::function<void()> backward_fn) {
    entries_.push_back({std::move(out), std::move(backward_fn)});
  }

  std::size_t size() const { return entries_.size(); }

  /// Propagates d(loss)/d(x) to every tracked tensor. Intermediate gradients are
  /// reset on each call; leaf gradients accumulate across calls until zeroed.
  void backward(const Tensor<Real>& loss) {
    if (loss.size() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("loss is not connected to any tensor that requires grad");
    for (auto& e : entries_) e.out->grad.assign(e.out->value.size(), Real(0));
    auto& root = loss.node();
    root->ensure_grad();
    root->grad[0] += Real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward_fn();
  }

 private:
  struct Entry {
    std::shared_ptr<Node> out;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;
  Tape* previous_;
};

namespace detail {

template <class Real>
bool should_track(std::initializer_list<const Tensor<Real>*> inputs) {
  if (Tape<Real>::active() == nullptr) return false;
  for (auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class Real>
bool should_track(const std::vector<Tensor<Real>>& inputs) {
  if (Tape<Real>::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
}

// Builds the op output and, if tracking, registers `make_backward(out_node)` on the tape.
template <class Real, class MakeBackward>
Tensor<Real> finish(Shape shape, std::vector<Real> values, bool track, MakeBackward&& make_backward) {
  Tensor<Real> out(std::move(shape), std::move(values), track);
  if (track) {
    out.node()->is_leaf = false;
    auto node = out.node();
    Tape<Real>::active()->record(node, make_backward(node.get()));
  }
  return out;
}

struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const auto rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Flat source index for every output element under trailing-aligned broadcasting.
inline std::vector<std::uint32_t> broadcast_index(const Shape& src, const Shape& out) {
  const auto rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto src_axis = src.size() - 1 - i;
    const auto out_axis = rank - 1 - i;
    stride[out_axis] = src[src_axis] == 1 ? 0 : s;
    s *= src[src_axis];
  }
  const auto n = numel(out);
  std::vector<std::uint32_t> index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    index[flat] = static_cast<std::uint32_t>(offset);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      offset += stride[ax];
      if (counter[ax] < out[ax]) break;
      offset -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return index;
}

template <class Real, class Fwd, class GradA, class GradB>
Tensor<Real> binary_op(const Tensor<Real>& a, const Tensor<Real>& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const bool track = should_track<Real>({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  if (a.shape() == b.shape()) {
    const auto n = a.size();
    std::vector<Real> out(n);
    const Real* pa = an->value.data();
    const Real* pb = bn->value.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
    return finish<Real>(a.shape(), std::move(out), track, [=](TensorNode<Real>* self) {
      return [=] {
        const auto& g = self->grad;
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) an->grad[i] += grad_a(an->value[i], bn->value[i], self->value[i], g[i]);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) bn->grad[i] += grad_b(an->value[i], bn->value[i], self->value[i], g[i]);
        }
      };
    });
  }
  Shape shape = broadcast_shape(a.shape(), b.shape());
  auto ia = std::make_shared<std::vector<std::uint32_t>>(broadcast_index(a.shape(), shape));
  auto ib = std::make_shared<std::vector<std::uint32_t>>(broadcast_index(b.shape(), shape));
  const auto n = numel(shape);
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(an->value[(*ia)[i]], bn->value[(*ib)[i]]);
  return finish<Real>(std::move(shape), std::move(out), track, [=](TensorNode<Real>* self) {
    return [=] {
      const auto& g = self->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const auto j = (*ia)[i];
          an->grad[j] += grad_a(an->value[j], bn->value[(*ib)[i]], self->value[i], g[i]);
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const auto j = (*ib)[i];
          bn->grad[j] += grad_b(an->value[(*ia)[i]], bn->value[j], self->value[i], g[i]);
        }
      }
    };
  });
}

template <class Real, class Fwd, class Deriv>
Tensor<Real> unary_op(const Tensor<Real>& x, Fwd fwd, Deriv deriv) {
  const bool track = should_track<Real>({&x});
  auto xn = x.node();
  const auto n = x.size();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xn->value[i]);
  return finish<Real>(x.shape(), std::move(out), track, [=](TensorNode<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += self->grad[i] * deriv(xn->value[i], self->value[i]);
    };
  });
}

template <class Real>
using Node = TensorNode<Real>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, [](Real x, Real y) { return x + y; }, [](Real, Real, Real, Real g) { return g; },
      [](Real, Real, Real, Real g) { return g; });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, [](Real x, Real y) { return x - y; }, [](Real, Real, Real, Real g) { return g; },
      [](Real, Real, Real, Real g) { return -g; });
}

/// Hadamard product.
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y, Real, Real g) { return g * y; },
      [](Real x, Real, Real, Real g) { return g * x; });
}

template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y, Real, Real g) { return g / y; },
      [](Real, Real y, Real out, Real g) { return -g * out / y; });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  return detail::unary_op<Real>(
      x, [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real c) {
  return detail::unary_op<Real>(
      x, [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

/// 1 - x, used by the intensity gate.
template <class Real>
Tensor<Real> one_minus(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return Real(1) - v; }, [](Real, Real) { return Real(-1); });
}

// ---------------------------------------------------------------------------
// Activations

template <class Real>
Real stable_sigmoid(Real v) {
  const double x = static_cast<double>(v);
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  auto r = static_cast<Real>(s);
  // Keep the open interval (0, 1) even where the exact value rounds to a bound.
  if (r >= Real(1)) r = std::nextafter(Real(1), Real(0));
  if (r <= Real(0)) r = std::numeric_limits<Real>::denorm_min();
  return r;
}

template <class Real>
Real stable_softplus(Real v) {
  const double x = static_cast<double>(v);
  const double r = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return static_cast<Real>(r);
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return stable_sigmoid(v); },
      [](Real v, Real) {
        const Real s = stable_sigmoid(v);
        return s * (Real(1) - s);
      });
}

template <class Real>
Tensor<Real> softplus(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return stable_softplus(v); }, [](Real v, Real) { return stable_sigmoid(v); });
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return std::exp(v); }, [](Real, Real out) { return out; });
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <class Real>
Tensor<Real> sqrt(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return std::sqrt(v); }, [](Real, Real out) { return Real(0.5) / out; });
}

// ---------------------------------------------------------------------------
// Matrix product

/// Plain triple loop; the reference the blocked kernel must match bit for bit.
template <class Real>
void matmul_naive_kernel(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

/// Cache-blocked i-k-j kernel. Each output still sums over k in increasing order,
/// so results equal the naive kernel exactly.
template <class Real>
void matmul_blocked_kernel(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kBlock = 64;
  std::fill(c, c + m * n, Real(0));
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t p1 = std::min(k, p0 + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      Real* crow = c + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const Real av = a[i * k + p];
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

enum class MatmulKernel { kNaive, kBlocked };

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, MatmulKernel kernel = MatmulKernel::kBlocked) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n);
  if (kernel == MatmulKernel::kNaive) {
    matmul_naive_kernel(a.data().data(), b.data().data(), out.data(), m, k, n);
  } else {
    matmul_blocked_kernel(a.data().data(), b.data().data(), out.data(), m, k, n);
  }
  const bool track = detail::should_track<Real>({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  return detail::finish<Real>({m, n}, std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      const Real* g = self->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = dC * B^T, accumulated row by row so the inner loop runs over k contiguously
        std::vector<Real> bt(n * k);
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bn->value[p * n + j];
        }
        for (std::size_t i = 0; i < m; ++i) {
          Real* dst = an->grad.data() + i * k;
          const Real* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            const Real gv = grow[j];
            const Real* src = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) dst[p] += gv * src[p];
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const Real* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const Real av = an->value[i * k + p];
            Real* dst = bn->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
          }
        }
      }
    };
  });
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<Real> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.data()[i * c + j];
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>({c, r}, std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += self->grad[j * r + i];
    };
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>(std::move(shape), x.values(), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
    };
  });
}

template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw DimensionError("concat axis out of range for " + shape_str(shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size()) throw DimensionError("concat rank mismatch: " + shape_str(shape) + " vs " + shape_str(p.shape()));
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i != axis && p.dim(i) != shape[i]) {
        throw DimensionError("concat shape mismatch: " + shape_str(shape) + " vs " + shape_str(p.shape()));
      }
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  const auto view = detail::axis_view(shape, axis);
  std::vector<Real> out(numel(shape));
  std::vector<std::shared_ptr<detail::Node<Real>>> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t ext = p.dim(axis);
    const auto src = p.data();
    for (std::size_t o = 0; o < view.outer; ++o) {
      std::copy_n(src.data() + o * ext * view.inner, ext * view.inner,
                  out.data() + (o * view.extent + offset) * view.inner);
    }
    nodes.push_back(p.node());
    offsets.push_back(offset);
    offset += ext;
  }
  const bool track = detail::should_track<Real>(parts);
  return detail::finish<Real>(std::move(shape), std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
        auto& pn = nodes[idx];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::size_t ext = pn->value.size() / (view.outer * view.inner);
        for (std::size_t o = 0; o < view.outer; ++o) {
          const Real* g = self->grad.data() + (o * view.extent + offsets[idx]) * view.inner;
          Real* dst = pn->grad.data() + o * ext * view.inner;
          for (std::size_t i = 0; i < ext * view.inner; ++i) dst[i] += g[i];
        }
      }
    };
  });
}

/// Elements [begin, end) along `axis`.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto view = detail::axis_view(x.shape(), axis);
  if (begin >= end || end > view.extent) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t ext = end - begin;
  std::vector<Real> out(numel(shape));
  for (std::size_t o = 0; o < view.outer; ++o) {
    std::copy_n(x.data().data() + (o * view.extent + begin) * view.inner, ext * view.inner,
                out.data() + o * ext * view.inner);
  }
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>(std::move(shape), std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t o = 0; o < view.outer; ++o) {
        const Real* g = self->grad.data() + o * ext * view.inner;
        Real* dst = xn->grad.data() + (o * view.extent + begin) * view.inner;
        for (std::size_t i = 0; i < ext * view.inner; ++i) dst[i] += g[i];
      }
    };
  });
}

/// Row gather from a [rows, cols] table. Rows equal to `padding_row` (if set)
/// read as zeros and receive no gradient.
template <class Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, std::span<const std::uint32_t> ids,
                         std::optional<std::uint32_t> padding_row = std::nullopt) {
  if (table.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + shape_str(table.shape()));
  if (ids.empty()) throw ContractError("gather_rows with no ids");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<Real> out(ids.size() * cols, Real(0));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw IndexError("row id " + std::to_string(ids[i]) + " outside [0," + std::to_string(rows) + ")");
    }
    if (padding_row && ids[i] == *padding_row) continue;
    std::copy_n(table.data().data() + ids[i] * cols, cols, out.data() + i * cols);
  }
  const bool track = detail::should_track<Real>({&table});
  auto tn = table.node();
  auto id_copy = std::make_shared<std::vector<std::uint32_t>>(ids.begin(), ids.end());
  return detail::finish<Real>({ids.size(), cols}, std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      tn->ensure_grad();
      for (std::size_t i = 0; i < id_copy->size(); ++i) {
        const auto row = (*id_copy)[i];
        if (padding_row && row == *padding_row) continue;
        const Real* g = self->grad.data() + i * cols;
        Real* dst = tn->grad.data() + row * cols;
        for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j];
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Reductions (accumulated in double)

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  double acc = 0;
  for (auto v : x.data()) acc += v;
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>({1}, {static_cast<Real>(acc)}, track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      const Real g = self->grad[0];
      for (auto& v : xn->grad) v += g;
    };
  });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

/// Sum over `axis`, which is removed from the shape (a rank-1 input yields shape [1]).
template <class Real>
Tensor<Real> sum(const Tensor<Real>& x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  std::vector<Real> out(view.outer * view.inner);
  const Real* src = x.data().data();
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t i = 0; i < view.inner; ++i) {
      double acc = 0;
      for (std::size_t e = 0; e < view.extent; ++e) acc += src[(o * view.extent + e) * view.inner + i];
      out[o * view.inner + i] = static_cast<Real>(acc);
    }
  }
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>(std::move(shape), std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t o = 0; o < view.outer; ++o)
        for (std::size_t e = 0; e < view.extent; ++e)
          for (std::size_t i = 0; i < view.inner; ++i)
            xn->grad[(o * view.extent + e) * view.inner + i] += self->grad[o * view.inner + i];
    };
  });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x, std::size_t axis) {
  return scale(sum(x, axis), Real(1) / static_cast<Real>(x.dim(axis)));
}

// ---------------------------------------------------------------------------
// Softmax family (max-subtracted)

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis);
  std::vector<Real> out(x.size());
  const Real* src = x.data().data();
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t i = 0; i < view.inner; ++i) {
      auto at = [&](std::size_t e) { return (o * view.extent + e) * view.inner + i; };
      Real mx = src[at(0)];
      for (std::size_t e = 1; e < view.extent; ++e) mx = std::max(mx, src[at(e)]);
      double z = 0;
      for (std::size_t e = 0; e < view.extent; ++e) z += std::exp(static_cast<double>(src[at(e)] - mx));
      for (std::size_t e = 0; e < view.extent; ++e)
        out[at(e)] = static_cast<Real>(std::exp(static_cast<double>(src[at(e)] - mx)) / z);
    }
  }
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>(x.shape(), std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t o = 0; o < view.outer; ++o) {
        for (std::size_t i = 0; i < view.inner; ++i) {
          auto at = [&](std::size_t e) { return (o * view.extent + e) * view.inner + i; };
          double dot = 0;
          for (std::size_t e = 0; e < view.extent; ++e) dot += self->grad[at(e)] * self->value[at(e)];
          for (std::size_t e = 0; e < view.extent; ++e)
            xn->grad[at(e)] += self->value[at(e)] * static_cast<Real>(self->grad[at(e)] - dot);
        }
      }
    };
  });
}

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis);
  std::vector<Real> out(x.size());
  const Real* src = x.data().data();
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t i = 0; i < view.inner; ++i) {
      auto at = [&](std::size_t e) { return (o * view.extent + e) * view.inner + i; };
      Real mx = src[at(0)];
      for (std::size_t e = 1; e < view.extent; ++e) mx = std::max(mx, src[at(e)]);
      double z = 0;
      for (std::size_t e = 0; e < view.extent; ++e) z += std::exp(static_cast<double>(src[at(e)] - mx));
      const double lz = std::log(z) + mx;
      for (std::size_t e = 0; e < view.extent; ++e) out[at(e)] = static_cast<Real>(src[at(e)] - lz);
    }
  }
  const bool track = detail::should_track<Real>({&x});
  auto xn = x.node();
  return detail::finish<Real>(x.shape(), std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      xn->ensure_grad();
      for (std::size_t o = 0; o < view.outer; ++o) {
        for (std::size_t i = 0; i < view.inner; ++i) {
          auto at = [&](std::size_t e) { return (o * view.extent + e) * view.inner + i; };
          double gsum = 0;
          for (std::size_t e = 0; e < view.extent; ++e) gsum += self->grad[at(e)];
          for (std::size_t e = 0; e < view.extent; ++e) {
            const double p = std::exp(static_cast<double>(self->value[at(e)]));
            xn->grad[at(e)] += static_cast<Real>(self->grad[at(e)] - p * gsum);
          }
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean binary cross-entropy on pre-sigmoid logits, evaluated in log space:
/// softplus(z) - y*z per element.
template <class Real>
Tensor<Real> bce_with_logits(const Tensor<Real>& logits, std::span<const float> labels) {
  if (labels.size() != logits.size()) {
    throw DimensionError("bce: " + std::to_string(labels.size()) + " labels for logits " + shape_str(logits.shape()));
  }
  const auto n = logits.size();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data()[i];
    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    acc += sp - labels[i] * z;
  }
  const bool track = detail::should_track<Real>({&logits});
  auto ln = logits.node();
  auto y = std::make_shared<std::vector<float>>(labels.begin(), labels.end());
  return detail::finish<Real>({1}, {static_cast<Real>(acc / static_cast<double>(n))}, track,
                              [=](detail::Node<Real>* self) {
                                return [=] {
                                  ln->ensure_grad();
                                  const Real g = self->grad[0] / static_cast<Real>(n);
                                  for (std::size_t i = 0; i < n; ++i)
                                    ln->grad[i] += g * (stable_sigmoid(ln->value[i]) - static_cast<Real>((*y)[i]));
                                };
                              });
}

template <class Real>
bool all_finite(const Tensor<Real>& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](Real v) { return std::isfinite(v); });
}

}  // namespace duin
