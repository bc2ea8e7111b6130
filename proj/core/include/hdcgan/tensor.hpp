#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hdc {

/// All recoverable failures (shape mismatches, bad files, precondition
/// violations) are reported through this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Checked mode enables shape/finiteness assertions on the hot paths
/// (log of non-positive values, NaN gradients, repeated backward). Tests
/// run checked; training may turn it off for speed.
bool checked_mode() noexcept;
void set_checked_mode(bool on) noexcept;

/// Counter-based pseudo-random stream. The generator output is a pure
/// function of (seed, counter), so a stream is checkpointable as two
/// 64-bit integers and restorable in O(1) via seek(). The same
/// (algorithm, seed, counter) triple yields the same values on every
/// platform.
///
/// Algorithm 1: splitmix64 finalizer applied to seed + counter * golden
/// ratio, with Box-Muller for normal deviates (two uniforms per draw,
/// no cached spare).
class RngStream {
 public:
  static constexpr std::uint32_t kAlgorithm = 1;

  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  /// Independent substream for a named purpose ("init/G", "latent", ...).
  static RngStream derive(std::uint64_t seed, std::string_view label) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in (0, 1]. Never returns 0, so log() is safe.
  double uniform01() noexcept;
  /// Unbiased uniform integer in [0, n). Consumes a variable number of
  /// draws (rejection sampling); the counter tracks them all.
  std::uint64_t uniform_below(std::uint64_t n);
  /// Standard normal deviate. Consumes exactly two uniforms.
  double normal() noexcept;
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void seek(std::uint64_t counter) noexcept { counter_ = counter; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

namespace detail {
template <typename T>
struct Node;
}  // namespace detail

/// Dense n-dimensional array of T (float or double) with reverse-mode
/// automatic differentiation. A Tensor is a shared handle to a graph
/// node; copying a Tensor aliases the node. Data is immutable through
/// the op API (no op writes to its inputs); the optimizer mutates
/// parameter storage through raw_data() under exclusive access.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  /// Undefined handle; any use other than defined() throws.
  Tensor() = default;

  Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor normal(Shape shape, RngStream& rng, double mean = 0.0,
                       double stddev = 1.0, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;

  std::span<const T> data() const;
  /// Mutable storage access for the optimizer / deserialization path.
  /// Must not be used on tensors that participate in a live graph.
  std::span<T> raw_data();

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> grad_mut();
  void zero_grad();

  /// Copy of the values, cut loose from the graph (no parents, no grad).
  Tensor detach() const;

  /// Reverse sweep from this scalar. Accumulates (+=) into the grad of
  /// every reachable tensor that requires grad, in a deterministic
  /// topological order. A graph is single-use: calling backward twice
  /// on the same result throws in checked mode.
  void backward() const;

  const void* node_id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;

  template <typename U>
  friend Tensor<U> detail_wrap_node(std::shared_ptr<detail::Node<U>> node);
  template <typename U>
  friend const std::shared_ptr<detail::Node<U>>& detail_unwrap(
      const Tensor<U>& t);
};

template <typename U>
Tensor<U> detail_wrap_node(std::shared_ptr<detail::Node<U>> node) {
  return Tensor<U>(std::move(node));
}
template <typename U>
const std::shared_ptr<detail::Node<U>>& detail_unwrap(const Tensor<U>& t) {
  return t.node_;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---- elementwise ops (trailing-dimension broadcast on binary ops) ----
//
// Shapes broadcast NumPy-style on trailing dimensions only: align the
// shapes at their last dimension; each pair of extents must be equal or
// one of them 1; missing leading dimensions count as 1. Gradients of a
// broadcast operand are sum-reduced over the broadcast dimensions.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> neg(const Tensor<T>& a);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
/// Natural log. In checked mode a non-positive input throws.
template <typename T>
Tensor<T> log(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope = 0.01);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);
/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, double lo, double hi);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) {
  return neg(a);
}

// ---- reductions / shape ----

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// ---- linear algebra ----

/// [m,k] x [k,n] -> [m,n]. Backward: dA = dC.B^T, dB = A^T.dC.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Cross-correlation (no kernel flip), zero padding.
/// input [N,C,H,W], kernel [F,C,kh,kw] -> [N,F,H',W'] with
/// H' = floor((H + 2*pad - kh)/stride) + 1, likewise W'.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding);

/// Exact adjoint of conv2d with the same (stride, padding):
/// <conv2d(u,k), v> == <u, conv_transpose2d(v,k)> for all compatible u,v.
/// input [N,F,H,W], kernel [F,C,kh,kw] -> [N,C,H'',W''] with
/// H'' = (H-1)*stride - 2*pad + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           std::size_t stride, std::size_t padding);

}  // namespace hdc
