#pragma once

// Graph internals shared by the op implementations. Not installed.

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "hdcgan/tensor.hpp"

namespace hdc::detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates (+=) into parents' grads.
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
std::shared_ptr<Node<T>> make_node(Shape shape, std::vector<T> data) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

template <typename T>
const std::shared_ptr<Node<T>>& node_of(const Tensor<T>& t) {
  if (!t.defined()) throw Error("use of undefined tensor");
  return detail_unwrap(t);
}

// Trailing-dimension broadcast plan: per-output-dimension element strides
// for both operands, 0 where an operand is broadcast.
struct BcastPlan {
  Shape out;
  std::vector<std::size_t> extents;   // == out
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  std::size_t total = 1;
};

BcastPlan broadcast_plan(const Shape& a, const Shape& b);

// Unary elementwise builder: out = f(x); df(x, y) is d out / d x.
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& x, F&& f, DF&& df) {
  const auto& xn = node_of(x);
  std::vector<T> out(xn->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xn->data[i]);
  auto node = make_node<T>(xn->shape, std::move(out));
  if (xn->requires_grad) {
    node->requires_grad = true;
    node->parents = {xn};
    node->backprop = [df](Node<T>& self) {
      auto& xp = *self.parents[0];
      xp.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        xp.grad[i] += self.grad[i] * df(xp.data[i], self.data[i]);
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

// Walks the plan in row-major order calling fn(out_index, a_off, b_off).
template <typename Fn>
void broadcast_walk(const BcastPlan& plan, Fn&& fn) {
  const std::size_t rank = plan.extents.size();
  if (rank == 0) {
    fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t i = 0; i < plan.total; ++i) {
    fn(i, offa, offb);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offa += plan.stride_a[d];
      offb += plan.stride_b[d];
      if (idx[d] < plan.extents[d]) break;
      offa -= plan.stride_a[d] * plan.extents[d];
      offb -= plan.stride_b[d] * plan.extents[d];
      idx[d] = 0;
    }
  }
}


// Binary broadcasting builder; dfa/dfb give the local derivative w.r.t.
// each operand as a function of (a, b).
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, F&& f, DA&& dfa,
                    DB&& dfb) {
  const auto& an = node_of(a);
  const auto& bn = node_of(b);
  auto plan = broadcast_plan(an->shape, bn->shape);
  std::vector<T> out(plan.total);
  broadcast_walk(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = f(an->data[ia], bn->data[ib]);
  });
  auto node = make_node<T>(plan.out, std::move(out));
  if (an->requires_grad || bn->requires_grad) {
    node->requires_grad = true;
    node->parents = {an, bn};
    const bool need_a = an->requires_grad;
    const bool need_b = bn->requires_grad;
    node->backprop = [plan, dfa, dfb, need_a, need_b](Node<T>& self) {
      auto& ap = *self.parents[0];
      auto& bp = *self.parents[1];
      if (need_a) ap.ensure_grad();
      if (need_b) bp.ensure_grad();
      broadcast_walk(plan,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       const T g = self.grad[i];
                       if (need_a) ap.grad[ia] += g * dfa(ap.data[ia], bp.data[ib]);
                       if (need_b) bp.grad[ib] += g * dfb(ap.data[ia], bp.data[ib]);
                     });
    };
  }
  return detail_wrap_node(std::move(node));
}

}  // namespace hdc::detail
