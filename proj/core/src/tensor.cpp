#include "hdcgan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "autograd_internal.hpp"

namespace hdc {

namespace {

std::atomic<bool> g_checked{true};

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool checked_mode() noexcept { return g_checked.load(std::memory_order_relaxed); }
void set_checked_mode(bool on) noexcept {
  g_checked.store(on, std::memory_order_relaxed);
}

// ---- RngStream ----

RngStream RngStream::derive(std::uint64_t seed, std::string_view label) noexcept {
  return RngStream(mix64(seed ^ mix64(fnv1a(label))));
}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double RngStream::uniform01() noexcept {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw Error("uniform_below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() noexcept {
  const double u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// ---- broadcast plan ----

namespace detail {

BcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  BcastPlan plan;
  plan.extents.assign(rank, 1);
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);

  // element strides of the operands in their own layouts
  std::vector<std::size_t> sa(a.size()), sb(b.size());
  std::size_t acc = 1;
  for (std::size_t d = a.size(); d-- > 0;) {
    sa[d] = acc;
    acc *= a[d];
  }
  acc = 1;
  for (std::size_t d = b.size(); d-- > 0;) {
    sb[d] = acc;
    acc *= b[d];
  }

  for (std::size_t k = 0; k < rank; ++k) {
    // k counts from the trailing dimension
    const std::size_t d = rank - 1 - k;
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw Error("shapes not broadcastable: " + shape_str(a) + " vs " +
                  shape_str(b));
    }
    plan.extents[d] = std::max(ea, eb);
    plan.stride_a[d] = (ea == 1 && plan.extents[d] != 1) ? 0
                       : (k < a.size() ? sa[a.size() - 1 - k] : 0);
    plan.stride_b[d] = (eb == 1 && plan.extents[d] != 1) ? 0
                       : (k < b.size() ? sb[b.size() - 1 - k] : 0);
  }
  plan.out = plan.extents;
  plan.total = shape_size(plan.out);
  return plan;
}

}  // namespace detail

// ---- Tensor ----

using detail::Node;
using detail::node_of;

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw Error("zero extent in shape " + shape_str(shape));
  }
  node_ = detail::make_node<T>(shape, std::vector<T>(shape_size(shape), fill));
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw Error("zero extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw Error("shape " + shape_str(shape) + " needs " +
                std::to_string(shape_size(shape)) + " values, got " +
                std::to_string(values.size()));
  }
  node_ = detail::make_node<T>(std::move(shape), std::move(values));
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::normal(Shape shape, RngStream& rng, double mean,
                            double stddev, bool requires_grad) {
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) v = static_cast<T>(mean + stddev * rng.normal());
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node_of(*this)->shape;
}
template <typename T>
std::size_t Tensor<T>::size() const {
  return node_of(*this)->data.size();
}
template <typename T>
std::size_t Tensor<T>::rank() const {
  return node_of(*this)->shape.size();
}
template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node_of(*this)->data;
}
template <typename T>
std::span<T> Tensor<T>::raw_data() {
  return node_of(*this)->data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = node_of(*this);
  if (n->data.size() != 1) {
    throw Error("item() on non-scalar tensor of shape " + shape_str(n->shape));
  }
  return n->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& n = node_of(*this);
  if (index.size() != n->shape.size()) {
    throw Error("index rank mismatch for shape " + shape_str(n->shape));
  }
  std::size_t off = 0, stride = 1;
  const auto* idx = index.begin();
  for (std::size_t d = n->shape.size(); d-- > 0;) {
    if (idx[d] >= n->shape[d]) throw Error("index out of range");
    off += idx[d] * stride;
    stride *= n->shape[d];
  }
  return n->data[off];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_of(*this)->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  node_of(*this)->requires_grad = value;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !node_of(*this)->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  const auto& n = node_of(*this);
  if (n->grad.empty()) {
    throw Error("grad not populated; call backward() first");
  }
  return n->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() {
  auto& n = node_of(*this);
  n->ensure_grad();
  return n->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = node_of(*this);
  std::fill(n->grad.begin(), n->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& n = node_of(*this);
  auto copy = detail::make_node<T>(n->shape, n->data);
  return Tensor(std::move(copy));
}

template <typename T>
void Tensor<T>::backward() const {
  const auto& root = node_of(*this);
  if (root->data.size() != 1) {
    throw Error("backward() requires a scalar, got shape " +
                shape_str(root->shape));
  }
  if (checked_mode() && root->backward_ran) {
    throw Error("backward() called twice on the same graph");
  }

  // Deterministic post-order over the DAG (parents visited in the order
  // the op recorded them).
  std::vector<Node<T>*> topo;
  std::unordered_set<const Node<T>*> seen;
  struct Frame {
    Node<T>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<T>* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->requires_grad && !n->grad.empty()) {
      n->backprop(*n);
    }
  }
  root->backward_ran = true;

  if (checked_mode()) {
    for (Node<T>* n : topo) {
      if (!n->requires_grad) continue;
      if (n->grad.empty()) {
        throw Error("tensor requiring grad received no gradient");
      }
      for (T g : n->grad) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw Error("non-finite gradient after backward()");
        }
      }
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

// ---- op helpers ----

using detail::binary_op;
using detail::unary_op;

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  if (checked_mode()) {
    for (T v : a.data()) {
      if (!(v > T(0))) {
        throw Error("log of non-positive value " + std::to_string(v));
      }
    }
  }
  return unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope) {
  const T s = static_cast<T>(slope);
  return unary_op(
      a, [s](T x) { return x > T(0) ? x : s * x; },
      [s](T x, T) { return x > T(0) ? T(1) : s; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T c = static_cast<T>(factor);
  return unary_op(
      a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, double lo, double hi) {
  if (!(lo < hi)) throw Error("clamp: lo must be < hi");
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  return unary_op(
      a, [l, h](T x) { return std::min(std::max(x, l), h); },
      [l, h](T x, T) { return (x > l && x < h) ? T(1) : T(0); });
}

// ---- reductions / shape ----

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto& an = node_of(a);
  double acc = 0;
  for (T v : an->data) acc += static_cast<double>(v);
  auto node = detail::make_node<T>(Shape{1}, {static_cast<T>(acc)});
  if (an->requires_grad) {
    node->requires_grad = true;
    node->parents = {an};
    node->backprop = [](Node<T>& self) {
      auto& xp = *self.parents[0];
      xp.ensure_grad();
      const T g = self.grad[0];
      for (auto& gi : xp.grad) gi += g;
    };
  }
  return detail_wrap_node(std::move(node));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const auto& an = node_of(a);
  const std::size_t n = an->data.size();
  double acc = 0;
  for (T v : an->data) acc += static_cast<double>(v);
  auto node = detail::make_node<T>(Shape{1}, {static_cast<T>(acc / n)});
  if (an->requires_grad) {
    node->requires_grad = true;
    node->parents = {an};
    node->backprop = [n](Node<T>& self) {
      auto& xp = *self.parents[0];
      xp.ensure_grad();
      const T g = self.grad[0] / static_cast<T>(n);
      for (auto& gi : xp.grad) gi += g;
    };
  }
  return detail_wrap_node(std::move(node));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  const auto& an = node_of(a);
  if (shape_size(shape) != an->data.size()) {
    throw Error("reshape " + shape_str(an->shape) + " -> " + shape_str(shape) +
                ": element count mismatch");
  }
  auto node = detail::make_node<T>(std::move(shape), an->data);
  if (an->requires_grad) {
    node->requires_grad = true;
    node->parents = {an};
    node->backprop = [](Node<T>& self) {
      auto& xp = *self.parents[0];
      xp.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        xp.grad[i] += self.grad[i];
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

// ---- matmul ----

namespace {

// C[m,n] (+)= A[m,k] . B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] (+)= A[m,k] . B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C[m,n] (+)= A[k,m]^T . B[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& an = node_of(a);
  const auto& bn = node_of(b);
  if (an->shape.size() != 2 || bn->shape.size() != 2) {
    throw Error("matmul expects rank-2 tensors, got " + shape_str(an->shape) +
                " and " + shape_str(bn->shape));
  }
  const std::size_t m = an->shape[0], k = an->shape[1];
  const std::size_t k2 = bn->shape[0], n = bn->shape[1];
  if (k != k2) {
    throw Error("matmul inner extents disagree: " + shape_str(an->shape) +
                " vs " + shape_str(bn->shape));
  }
  std::vector<T> out(m * n);
  gemm_nn(an->data.data(), bn->data.data(), out.data(), m, k, n, false);
  auto node = detail::make_node<T>(Shape{m, n}, std::move(out));
  if (an->requires_grad || bn->requires_grad) {
    node->requires_grad = true;
    node->parents = {an, bn};
    const bool need_a = an->requires_grad;
    const bool need_b = bn->requires_grad;
    node->backprop = [m, k, n, need_a, need_b](Node<T>& self) {
      auto& ap = *self.parents[0];
      auto& bp = *self.parents[1];
      if (need_a) {
        ap.ensure_grad();
        // dA += dC . B^T
        gemm_nt(self.grad.data(), bp.data.data(), ap.grad.data(), m, n, k,
                true);
      }
      if (need_b) {
        bp.ensure_grad();
        // dB += A^T . dC
        gemm_tn(ap.data.data(), self.grad.data(), bp.grad.data(), k, m, n,
                true);
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

// ---- convolution ----
//
// Both conv2d and conv_transpose2d are expressed through one im2col
// geometry, which makes them exact linear adjoints of each other:
//   conv2d:            y = W . col(x)
//   conv_transpose2d:  y = col^T(W^T . x)
// Reductions run in a fixed sequential order (row-major over the column
// buffer), so results are bitwise reproducible.

namespace {

struct ConvGeom {
  // image side
  std::size_t channels, height, width;
  // feature side
  std::size_t filters, kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
  std::size_t image_elems() const { return channels * height * width; }
  std::size_t feature_elems() const { return filters * out_h * out_w; }
};

ConvGeom conv_geometry(std::size_t C, std::size_t H, std::size_t W,
                       std::size_t F, std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad) {
  if (stride == 0) throw Error("conv: stride must be positive");
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw Error("conv: kernel " + std::to_string(kh) + "x" +
                std::to_string(kw) + " larger than padded input " +
                std::to_string(H + 2 * pad) + "x" + std::to_string(W + 2 * pad));
  }
  ConvGeom g{C, H, W, F, kh, kw, stride, pad, 0, 0};
  g.out_h = (H + 2 * pad - kh) / stride + 1;
  g.out_w = (W + 2 * pad - kw) / stride + 1;
  return g;
}

// col[rows, cols] <- patches of img[C,H,W] (zero padding)
template <typename T>
void im2col(const ConvGeom& g, const T* img, T* col) {
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
              static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : src[ix];
          }
        }
      }
    }
  }
}

// img[C,H,W] += patches scattered back from col[rows, cols]
template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* img) {
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
              static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = img + (c * g.height + iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// feature[F, cols] = W[F, rows] . col(image)
template <typename T>
void conv_apply(const ConvGeom& g, const T* weight, const T* image, T* feature,
                std::vector<T>& scratch) {
  scratch.resize(g.rows() * g.cols());
  im2col(g, image, scratch.data());
  gemm_nn(weight, scratch.data(), feature, g.filters, g.rows(), g.cols(),
          false);
}

// image[C,H,W] += col^T(W^T . feature)
template <typename T>
void conv_adjoint_add(const ConvGeom& g, const T* weight, const T* feature,
                      T* image, std::vector<T>& scratch) {
  scratch.assign(g.rows() * g.cols(), T(0));
  gemm_tn(weight, feature, scratch.data(), g.rows(), g.filters, g.cols(),
          true);
  col2im_add(g, scratch.data(), image);
}

// dW[F, rows] += feature[F, cols] . col(image)^T
template <typename T>
void conv_weight_grad_add(const ConvGeom& g, const T* feature, const T* image,
                          T* dweight, std::vector<T>& scratch) {
  scratch.resize(g.rows() * g.cols());
  im2col(g, image, scratch.data());
  gemm_nt(feature, scratch.data(), dweight, g.filters, g.cols(), g.rows(),
          true);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding) {
  const auto& xn = node_of(input);
  const auto& kn = node_of(kernel);
  if (xn->shape.size() != 4 || kn->shape.size() != 4) {
    throw Error("conv2d expects input [N,C,H,W] and kernel [F,C,kh,kw], got " +
                shape_str(xn->shape) + " and " + shape_str(kn->shape));
  }
  const std::size_t N = xn->shape[0], C = xn->shape[1], H = xn->shape[2],
                    W = xn->shape[3];
  const std::size_t F = kn->shape[0], kc = kn->shape[1], kh = kn->shape[2],
                    kw = kn->shape[3];
  if (kc != C) {
    throw Error("conv2d channel mismatch: input " + shape_str(xn->shape) +
                " vs kernel " + shape_str(kn->shape));
  }
  const ConvGeom g = conv_geometry(C, H, W, F, kh, kw, stride, padding);

  std::vector<T> out(N * g.feature_elems());
  std::vector<T> scratch;
  for (std::size_t n = 0; n < N; ++n) {
    conv_apply(g, kn->data.data(), xn->data.data() + n * g.image_elems(),
               out.data() + n * g.feature_elems(), scratch);
  }
  auto node =
      detail::make_node<T>(Shape{N, F, g.out_h, g.out_w}, std::move(out));
  if (xn->requires_grad || kn->requires_grad) {
    node->requires_grad = true;
    node->parents = {xn, kn};
    const bool need_x = xn->requires_grad;
    const bool need_k = kn->requires_grad;
    node->backprop = [g, N, need_x, need_k](Node<T>& self) {
      auto& xp = *self.parents[0];
      auto& kp = *self.parents[1];
      std::vector<T> scratch;
      if (need_x) {
        xp.ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          conv_adjoint_add(g, kp.data.data(),
                           self.grad.data() + n * g.feature_elems(),
                           xp.grad.data() + n * g.image_elems(), scratch);
        }
      }
      if (need_k) {
        kp.ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          conv_weight_grad_add(g, self.grad.data() + n * g.feature_elems(),
                               xp.data.data() + n * g.image_elems(),
                               kp.grad.data(), scratch);
        }
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           std::size_t stride, std::size_t padding) {
  const auto& xn = node_of(input);
  const auto& kn = node_of(kernel);
  if (xn->shape.size() != 4 || kn->shape.size() != 4) {
    throw Error(
        "conv_transpose2d expects input [N,F,H,W] and kernel [F,C,kh,kw], "
        "got " +
        shape_str(xn->shape) + " and " + shape_str(kn->shape));
  }
  const std::size_t N = xn->shape[0], F = xn->shape[1], H = xn->shape[2],
                    W = xn->shape[3];
  const std::size_t kf = kn->shape[0], C = kn->shape[1], kh = kn->shape[2],
                    kw = kn->shape[3];
  if (kf != F) {
    throw Error("conv_transpose2d channel mismatch: input " +
                shape_str(xn->shape) + " vs kernel " + shape_str(kn->shape));
  }
  if (stride == 0) throw Error("conv_transpose2d: stride must be positive");
  const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((H - 1) * stride) -
                            2 * static_cast<std::ptrdiff_t>(padding) +
                            static_cast<std::ptrdiff_t>(kh);
  const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((W - 1) * stride) -
                            2 * static_cast<std::ptrdiff_t>(padding) +
                            static_cast<std::ptrdiff_t>(kw);
  if (oh < 1 || ow < 1) {
    throw Error("conv_transpose2d: output size would be non-positive");
  }
  // The geometry whose conv2d produces exactly [F,H,W] from [C,oh,ow].
  const ConvGeom g =
      conv_geometry(C, static_cast<std::size_t>(oh),
                    static_cast<std::size_t>(ow), F, kh, kw, stride, padding);
  if (g.out_h != H || g.out_w != W) {
    throw Error("conv_transpose2d: shapes inconsistent with stride/padding");
  }

  std::vector<T> out(N * g.image_elems(), T(0));
  std::vector<T> scratch;
  for (std::size_t n = 0; n < N; ++n) {
    conv_adjoint_add(g, kn->data.data(), xn->data.data() + n * g.feature_elems(),
                     out.data() + n * g.image_elems(), scratch);
  }
  auto node = detail::make_node<T>(
      Shape{N, C, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)},
      std::move(out));
  if (xn->requires_grad || kn->requires_grad) {
    node->requires_grad = true;
    node->parents = {xn, kn};
    const bool need_x = xn->requires_grad;
    const bool need_k = kn->requires_grad;
    node->backprop = [g, N, need_x, need_k](Node<T>& self) {
      auto& xp = *self.parents[0];
      auto& kp = *self.parents[1];
      std::vector<T> scratch;
      if (need_x) {
        xp.ensure_grad();
        std::vector<T> feat(g.feature_elems());
        for (std::size_t n = 0; n < N; ++n) {
          conv_apply(g, kp.data.data(), self.grad.data() + n * g.image_elems(),
                     feat.data(), scratch);
          T* dst = xp.grad.data() + n * g.feature_elems();
          for (std::size_t i = 0; i < feat.size(); ++i) dst[i] += feat[i];
        }
      }
      if (need_k) {
        kp.ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          conv_weight_grad_add(g, xp.data.data() + n * g.feature_elems(),
                               self.grad.data() + n * g.image_elems(),
                               kp.grad.data(), scratch);
        }
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

// ---- explicit instantiations ----

#define HDC_INSTANTIATE(T)                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> neg(const Tensor<T>&);                                  \
  template Tensor<T> exp(const Tensor<T>&);                                  \
  template Tensor<T> log(const Tensor<T>&);                                  \
  template Tensor<T> tanh(const Tensor<T>&);                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                              \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                   \
  template Tensor<T> scale(const Tensor<T>&, double);                        \
  template Tensor<T> clamp(const Tensor<T>&, double, double);                \
  template Tensor<T> sum(const Tensor<T>&);                                  \
  template Tensor<T> mean(const Tensor<T>&);                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                    \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&,    \
                                      std::size_t, std::size_t);

HDC_INSTANTIATE(float)
HDC_INSTANTIATE(double)

#undef HDC_INSTANTIATE

}  // namespace hdc
