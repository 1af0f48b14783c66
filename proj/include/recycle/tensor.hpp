#pragma once

// Dense n-dimensional tensors with reverse-mode automatic differentiation.
//
// Every operation records its inputs and a backward closure on the result;
// backward() walks the recorded graph in reverse topological order. Graphs are
// built per forward pass and released with the last handle. Leaves created
// with requires_grad accumulate gradients across backward() calls until
// zero_grad().

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "recycle/errors.hpp"

namespace recycle::autograd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    for (std::size_t extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
    if (values.size() != numel_of(shape)) {
      throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                           std::to_string(numel_of(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  // Direct write access, for optimizers, initialization and finite differences.
  std::span<T> mutable_values() { return node_->value; }
  T item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const noexcept { return node_->parents.empty(); }
  // True once a backward pass has reached this tensor since the last zero_grad().
  bool has_grad() const noexcept { return node_ && node_->has_grad; }
  std::span<const T> grad() const { return node_->grad; }
  // Marks the gradient as populated.
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    node_->has_grad = true;
    return node_->grad;
  }
  void zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    node_->has_grad = false;
  }

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  template <std::floating_point U>
  friend void backward(const Tensor<U>& loss);

  struct Node;
  using BackwardFn = std::function<void(Node&)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward_fn;

    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    // Gradient buffer of parent i, or nullptr when it is not tracked.
    T* parent_grad(std::size_t i) {
      Node& p = *parents[i];
      if (!p.requires_grad) return nullptr;
      p.ensure_grad();
      p.has_grad = true;
      return p.grad.data();
    }
    const std::vector<T>& parent_value(std::size_t i) const { return parents[i]->value; }
  };

  // Result of an operation over `inputs`. The backward closure is kept only
  // when some input is tracked.
  static Tensor make_result(Shape shape, std::vector<T> values, std::initializer_list<Tensor> inputs,
                            BackwardFn fn) {
    return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs), std::move(fn));
  }
  static Tensor make_result(Shape shape, std::vector<T> values, const std::vector<Tensor>& inputs,
                            BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
    if (tracked) {
      node->requires_grad = true;
      for (const auto& t : inputs) node->parents.push_back(t.node_);
      node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
  }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Populates grads of every tracked tensor reachable from `loss` with
// d(loss)/d(tensor). Leaves accumulate; interior nodes are reset first.
template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  using Node = typename Tensor<T>::Node;
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw UsageError("backward() on a loss that depends on no tracked tensor");

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node_.get(), 0}};
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->value.size(), T(0));
  }
  Node& root = *loss.node_;
  root.ensure_grad();
  root.grad[0] += T(1);
  root.has_grad = true;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->parents.empty()) (*it)->backward_fn(**it);
  }
}

namespace detail {

// Shapes of a binary elementwise op: equal, or one a suffix of the other
// (the shorter operand repeats over the leading axes of the longer one).
inline void check_broadcast(const Shape& a, const Shape& b, const char* op) {
  const Shape& big = a.size() >= b.size() ? a : b;
  const Shape& small = a.size() >= b.size() ? b : a;
  if (!std::equal(small.rbegin(), small.rend(), big.rbegin())) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                         " do not broadcast");
  }
}

// outer x axis x inner decomposition around `axis`.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

inline void check_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_broadcast(a.shape(), b.shape(), "add");
  const bool a_big = a.rank() >= b.rank();
  const Tensor<T>& big = a_big ? a : b;
  const Tensor<T>& small = a_big ? b : a;
  const std::size_t n = big.numel(), m = small.numel();
  std::vector<T> out(big.values().begin(), big.values().end());
  auto sv = small.values();
  for (std::size_t i = 0; i < n; ++i) out[i] += sv[i % m];
  return Tensor<T>::make_result(big.shape(), std::move(out), {big, small}, [n, m](auto& self) {
    const auto& g = self.grad;
    if (T* gb = self.parent_grad(0)) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    if (T* gs = self.parent_grad(1)) for (std::size_t i = 0; i < n; ++i) gs[i % m] += g[i];
  });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_broadcast(a.shape(), b.shape(), "sub");
  const std::size_t na = a.numel(), nb = b.numel(), n = std::max(na, nb);
  const Shape shape = a.rank() >= b.rank() ? a.shape() : b.shape();
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] - bv[i % nb];
  return Tensor<T>::make_result(shape, std::move(out), {a, b}, [n, na, nb](auto& self) {
    const auto& g = self.grad;
    if (T* ga = self.parent_grad(0)) for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i];
    if (T* gb = self.parent_grad(1)) for (std::size_t i = 0; i < n; ++i) gb[i % nb] -= g[i];
  });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_broadcast(a.shape(), b.shape(), "mul");
  const std::size_t na = a.numel(), nb = b.numel(), n = std::max(na, nb);
  const Shape shape = a.rank() >= b.rank() ? a.shape() : b.shape();
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] * bv[i % nb];
  return Tensor<T>::make_result(shape, std::move(out), {a, b}, [n, na, nb](auto& self) {
    const auto& g = self.grad;
    const auto& av = self.parent_value(0);
    const auto& bv = self.parent_value(1);
    if (T* ga = self.parent_grad(0)) for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * bv[i % nb];
    if (T* gb = self.parent_grad(1)) for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * av[i % na];
  });
}

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v *= factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [factor](auto& self) {
    const auto& g = self.grad;
    if (T* ga = self.parent_grad(0)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

// [m,k] x [k,n] -> [m,n]
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " do not conform");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  const T* A = a.values().data();
  const T* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* C = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      const T* Brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) C[j] += aip * Brow[j];
    }
  }
  return Tensor<T>::make_result({m, n}, std::move(out), {a, b}, [m, k, n](auto& self) {
    const T* G = self.grad.data();
    const T* A = self.parent_value(0).data();
    const T* B = self.parent_value(1).data();
    if (T* gA = self.parent_grad(0)) {  // G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T* Brow = B + p * n;
          const T* Grow = G + i * n;
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
          gA[i * k + p] += acc;
        }
      }
    }
    if (T* gB = self.parent_grad(1)) {  // A^T G
      for (std::size_t i = 0; i < m; ++i) {
        const T* Grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = A[i * k + p];
          T* gBrow = gB + p * n;
          for (std::size_t j = 0; j < n; ++j) gBrow[j] += aip * Grow[j];
        }
      }
    }
  });
}

// Permutes axes: result axis i is input axis axes[i].
template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  std::vector<std::size_t> sorted(axes);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> identity(in.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  if (sorted != identity) {
    throw DimensionError("transpose: invalid permutation for shape " + shape_string(in));
  }
  std::vector<std::size_t> in_strides(in.size(), 1);
  for (std::size_t i = in.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = in[axes[i]];

  const std::size_t n = a.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) off += idx[i] * in_strides[axes[i]];
    (*source)[flat] = off;
    for (std::size_t i = idx.size(); i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<T> out(n);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[(*source)[i]];
  return Tensor<T>::make_result(out_shape, std::move(out), {a}, [source](auto& self) {
    const auto& g = self.grad;
    if (T* ga = self.parent_grad(0)) for (std::size_t i = 0; i < g.size(); ++i) ga[(*source)[i]] += g[i];
  });
}

// 2-D transpose.
template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
  return transpose(a, {1, 0});
}

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {a}, [](auto& self) {
    const auto& g = self.grad;
    if (T* ga = self.parent_grad(0)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <std::floating_point T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::check_axis(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> blocks;  // per-part contiguous block length
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) {
      throw DimensionError("concat: shapes " + shape_string(first) + " and " + shape_string(probe) +
                           " differ in rank");
    }
    probe[axis] = first[axis];
    if (probe != first) {
      throw DimensionError("concat: shapes " + shape_string(first) + " and " + shape_string(p.shape()) +
                           " differ off axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  const auto view = detail::axis_view(out_shape, axis);
  for (const auto& p : parts) blocks.push_back(p.dim(axis) * view.inner);
  const std::size_t row = view.extent * view.inner;
  std::vector<T> out(numel_of(out_shape));
  for (std::size_t o = 0; o < view.outer; ++o) {
    std::size_t col = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto src = parts[i].values().subspan(o * blocks[i], blocks[i]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(o * row + col));
      col += blocks[i];
    }
  }
  return Tensor<T>::make_result(out_shape, std::move(out), parts, [blocks, row, outer = view.outer](auto& self) {
    const auto& g = self.grad;
    std::size_t col = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (T* gp = self.parent_grad(i)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t c = 0; c < blocks[i]; ++c) gp[o * blocks[i] + c] += g[o * row + col + c];
        }
      }
      col += blocks[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat<T>({a, b}, axis);
}

// Elements [begin, end) along `axis`.
template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  detail::check_axis(a.shape(), axis, "slice");
  if (begin >= end || end > a.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  const auto view = detail::axis_view(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t in_row = view.extent * view.inner;
  const std::size_t out_row = (end - begin) * view.inner;
  const std::size_t offset = begin * view.inner;
  std::vector<T> out(view.outer * out_row);
  auto av = a.values();
  for (std::size_t o = 0; o < view.outer; ++o) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(o * in_row + offset), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  return Tensor<T>::make_result(out_shape, std::move(out), {a},
                                [outer = view.outer, in_row, out_row, offset](auto& self) {
    const auto& g = self.grad;
    if (T* ga = self.parent_grad(0)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < out_row; ++c) ga[o * in_row + offset + c] += g[o * out_row + c];
      }
    }
  });
}

template <std::floating_point T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  detail::check_axis(a.shape(), axis, "softmax");
  const auto v = detail::axis_view(a.shape(), axis);
  auto av = a.values();
  for (T x : av) {
    if (std::isnan(x)) throw NumericError("softmax: NaN input");
  }
  std::vector<T> out(a.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      T mx = av[base];
      for (std::size_t e = 1; e < v.extent; ++e) mx = std::max(mx, av[base + e * v.inner]);
      T total = 0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const T ex = std::exp(av[base + e * v.inner] - mx);
        out[base + e * v.inner] = ex;
        total += ex;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  }
  // The closure reads the softmax output back from its own node.
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [v](auto& self) {
    T* ga = self.parent_grad(0);
    if (!ga) return;
    const auto& g = self.grad;
    const auto& y = self.value;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        T dot = 0;
        for (std::size_t e = 0; e < v.extent; ++e) dot += g[base + e * v.inner] * y[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          ga[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

// Normalizes over the last axis, then applies gain and bias (both shaped like
// the last axis).
template <std::floating_point T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  const std::size_t n = a.shape().back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match last axis of " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = a.numel() / n;
  auto av = a.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto xhat = std::make_shared<std::vector<T>>(a.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * n;
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const T h = (x[i] - mean) * inv;
      (*xhat)[r * n + i] = h;
      out[r * n + i] = h * gv[i] + bv[i];
    }
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, gain, bias}, [n, rows, xhat, rstd](auto& self) {
    const auto& g = self.grad;
    const auto& gv = self.parent_value(1);
    T* ga = self.parent_grad(0);
    T* gg = self.parent_grad(1);
    T* gb = self.parent_grad(2);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = g.data() + r * n;
      const T* h = xhat->data() + r * n;
      if (gg) for (std::size_t i = 0; i < n; ++i) gg[i] += gr[i] * h[i];
      if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += gr[i];
      if (ga) {
        T sum_d = 0, sum_dh = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const T d = gr[i] * gv[i];
          sum_d += d;
          sum_dh += d * h[i];
        }
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T d = gr[i] * gv[i];
          ga[r * n + i] += (*rstd)[r] * (d - inv_n * sum_d - h[i] * inv_n * sum_dh);
        }
      }
    }
  });
}

template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](auto& self) {
    T* ga = self.parent_grad(0);
    if (!ga) return;
    const auto& x = self.parent_value(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) ga[i] += self.grad[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> tanh(const Tensor<T>& a) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v = std::tanh(v);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](auto& self) {
    T* ga = self.parent_grad(0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      ga[i] += self.grad[i] * (T(1) - self.value[i] * self.value[i]);
    }
  });
}

// x [.., in] . W [in, out] + b [out]
template <std::floating_point T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add(matmul(x, weight), bias);
}

// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inverted dropout: survivors scaled by 1/(1-p). Identity when not training.
template <std::floating_point T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool training, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return a;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(a.numel());
  for (T& m : *mask) m = unit_uniform(rng) >= p ? keep_scale : T(0);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * (*mask)[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [mask](auto& self) {
    if (T* ga = self.parent_grad(0)) {
      for (std::size_t i = 0; i < mask->size(); ++i) ga[i] += self.grad[i] * (*mask)[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  return Tensor<T>::make_result({1}, {total}, {a}, [](auto& self) {
    if (T* ga = self.parent_grad(0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
    }
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

namespace detail {
template <std::floating_point T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}
}  // namespace detail

// Mean absolute error; the subgradient of |0| is taken as 0.
template <std::floating_point T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_shape(pred, target, "mae_loss");
  const std::size_t n = pred.numel();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(pred.values()[i] - target.values()[i]);
  return Tensor<T>::make_result({1}, {total / static_cast<T>(n)}, {pred, target}, [n](auto& self) {
    const auto& p = self.parent_value(0);
    const auto& t = self.parent_value(1);
    const T g = self.grad[0] / static_cast<T>(n);
    T* gp = self.parent_grad(0);
    T* gt = self.parent_grad(1);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = p[i] - t[i];
      const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (gp) gp[i] += s;
      if (gt) gt[i] -= s;
    }
  });
}

template <std::floating_point T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.values()[i] - target.values()[i];
    total += d * d;
  }
  return Tensor<T>::make_result({1}, {total / static_cast<T>(n)}, {pred, target}, [n](auto& self) {
    const auto& p = self.parent_value(0);
    const auto& t = self.parent_value(1);
    const T g = T(2) * self.grad[0] / static_cast<T>(n);
    T* gp = self.parent_grad(0);
    T* gt = self.parent_grad(1);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = (p[i] - t[i]) * g;
      if (gp) gp[i] += d;
      if (gt) gt[i] -= d;
    }
  });
}

}  // namespace recycle::autograd
