#include "hdcgan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "autograd_internal.hpp"

namespace hdc {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

SeluParams solve_selu_fixed_point() {
  // Zero-mean condition for z ~ N(0,1), lambda factored out:
  //   E[z 1{z>0}] + alpha E[(e^z - 1) 1{z<=0}] = 0
  // with E[z 1{z>0}] = pdf(0) and E[e^z 1{z<=0}] = e^{1/2} cdf(-1).
  const double e_pos = normal_pdf(0.0);
  const double e_exp = std::exp(0.5) * normal_cdf(-1.0);
  const double alpha = e_pos / (0.5 - e_exp);

  // Unit second moment:
  //   lambda^2 (E[z^2 1{z>0}] + alpha^2 E[(e^z - 1)^2 1{z<=0}]) = 1
  // with E[z^2 1{z>0}] = 1/2 and
  //   E[(e^z-1)^2 1{z<=0}] = e^2 cdf(-2) - 2 e^{1/2} cdf(-1) + 1/2.
  const double e_sq =
      std::exp(2.0) * normal_cdf(-2.0) - 2.0 * e_exp + 0.5;
  const double lambda = 1.0 / std::sqrt(0.5 + alpha * alpha * e_sq);
  return {lambda, alpha};
}

double selu_value(double x, const SeluParams& p) {
  return x > 0 ? p.lambda * x : p.lambda * p.alpha * std::expm1(x);
}

template <typename T>
Tensor<T> selu(const Tensor<T>& x, const SeluParams& p) {
  const T lam = static_cast<T>(p.lambda);
  const T la = static_cast<T>(p.lambda * p.alpha);
  return detail::unary_op(
      x, [lam, la](T v) { return v > T(0) ? lam * v : la * std::expm1(v); },
      [lam, la](T v, T y) { return v >= T(0) ? lam : y + la; });
}

template Tensor<float> selu(const Tensor<float>&, const SeluParams&);
template Tensor<double> selu(const Tensor<double>&, const SeluParams&);

template <typename T>
WeightMoments weight_moments(std::span<const T> w) {
  if (w.empty()) throw Error("weight_moments: empty weight vector");
  double omega = 0, tau = 0;
  for (T v : w) {
    const double d = static_cast<double>(v);
    omega += d;
    tau += d * d;
  }
  return {omega, tau};
}

template WeightMoments weight_moments(std::span<const float>);
template WeightMoments weight_moments(std::span<const double>);

MomentPair selu_gaussian_moments(double mean, double variance,
                                 const SeluParams& p) {
  if (variance < 0) throw Error("selu_gaussian_moments: negative variance");
  if (variance == 0) return {selu_value(mean, p), 0.0};
  const double m = mean;
  const double s = std::sqrt(variance);
  const double r = m / s;
  // Split the integrals at z = 0 and use
  //   E[e^{kz} 1{z<=0}] = e^{km + k^2 s^2 / 2} cdf(-m/s - k s).
  const double pos1 = m * normal_cdf(r) + s * normal_pdf(r);
  const double e1 = std::exp(m + 0.5 * s * s) * normal_cdf(-r - s);
  const double e0 = normal_cdf(-r);
  const double mean_out = p.lambda * (pos1 + p.alpha * (e1 - e0));

  const double pos2 = (m * m + s * s) * normal_cdf(r) + m * s * normal_pdf(r);
  const double e2 = std::exp(2 * m + 2 * s * s) * normal_cdf(-r - 2 * s);
  const double sq =
      p.lambda * p.lambda *
      (pos2 + p.alpha * p.alpha * (e2 - 2 * e1 + e0));
  return {mean_out, std::max(sq - mean_out * mean_out, 0.0)};
}

MomentPair moment_map(MomentPair input, double omega, double tau,
                      const SeluParams& p, std::size_t samples,
                      RngStream& rng) {
  if (input.variance < 0) throw Error("moment_map: negative input variance");
  if (tau < 0) throw Error("moment_map: negative tau");
  const double m = input.mean * omega;
  const double s2 = input.variance * tau;
  if (s2 == 0) return {selu_value(m, p), 0.0};
  if (samples < 10000) {
    throw Error("moment_map: Monte-Carlo estimate needs at least 10^4 samples");
  }
  const double s = std::sqrt(s2);
  double sum = 0, sumsq = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double y = selu_value(m + s * rng.normal(), p);
    sum += y;
    sumsq += y * y;
  }
  const double n = static_cast<double>(samples);
  const double mean_out = sum / n;
  const double var_out = (sumsq - n * mean_out * mean_out) / (n - 1);
  return {mean_out, std::max(var_out, 0.0)};
}

// ---- batchnorm ----

template <typename T>
BatchNormState<T>::BatchNormState(std::size_t channels, double momentum,
                                  double eps)
    : gamma(Shape{channels}, T(1), true),
      beta(Shape{channels}, T(0), true),
      running_mean(Shape{channels}, T(0)),
      running_var(Shape{channels}, T(1)),
      momentum(momentum),
      eps(eps) {
  if (channels == 0) throw Error("batchnorm: channel count must be positive");
  if (!(eps > 0)) throw Error("batchnorm: eps must be positive");
  if (!(momentum > 0 && momentum < 1)) {
    throw Error("batchnorm: momentum must lie in (0,1)");
  }
}

template struct BatchNormState<float>;
template struct BatchNormState<double>;

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& state,
                      bool training) {
  const auto& xn = detail::node_of(x);
  if (xn->shape.size() != 4) {
    throw Error("batchnorm2d expects [N,C,H,W], got " + shape_str(xn->shape));
  }
  const std::size_t N = xn->shape[0], C = xn->shape[1], H = xn->shape[2],
                    W = xn->shape[3];
  if (state.channels() != C) {
    throw Error("batchnorm2d: state has " + std::to_string(state.channels()) +
                " channels, input has " + std::to_string(C));
  }
  const auto& gn = detail::node_of(state.gamma);
  const auto& bn = detail::node_of(state.beta);
  const std::size_t m = N * H * W;
  const std::size_t plane = H * W;

  std::vector<double> mean(C), inv_std(C);
  if (training) {
    if (m < 2) {
      throw Error("batchnorm2d: batch statistics undefined for N*H*W < 2");
    }
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = xn->data.data() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      }
      mean[c] = acc / m;
      double var = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = xn->data.data() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mean[c];
          var += d * d;
        }
      }
      var /= m;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      auto rm = state.running_mean.raw_data();
      auto rv = state.running_var.raw_data();
      rm[c] = static_cast<T>((1 - state.momentum) * rm[c] +
                             state.momentum * mean[c]);
      rv[c] =
          static_cast<T>((1 - state.momentum) * rv[c] + state.momentum * var);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = static_cast<double>(state.running_mean.data()[c]);
      inv_std[c] =
          1.0 / std::sqrt(static_cast<double>(state.running_var.data()[c]) +
                          state.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(xn->data.size());
  std::vector<T> out(xn->data.size());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* src = xn->data.data() + (n * C + c) * plane;
      T* xh = xhat->data() + (n * C + c) * plane;
      T* dst = out.data() + (n * C + c) * plane;
      const T g = gn->data[c];
      const T b = bn->data[c];
      const T mu = static_cast<T>(mean[c]);
      const T is = static_cast<T>(inv_std[c]);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mu) * is;
        dst[i] = g * xh[i] + b;
      }
    }
  }

  auto node = detail::make_node<T>(xn->shape, std::move(out));
  if (xn->requires_grad || gn->requires_grad || bn->requires_grad) {
    node->requires_grad = true;
    node->parents = {xn, gn, bn};
    const bool need_x = xn->requires_grad;
    const bool need_g = gn->requires_grad;
    const bool need_b = bn->requires_grad;
    node->backprop = [=, inv_std = std::move(inv_std)](detail::Node<T>& self) {
      auto& xp = *self.parents[0];
      auto& gp = *self.parents[1];
      auto& bp = *self.parents[2];
      if (need_x) xp.ensure_grad();
      if (need_g) gp.ensure_grad();
      if (need_b) bp.ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0, sum_dyx = 0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t off = (n * C + c) * plane;
          const T* dy = self.grad.data() + off;
          const T* xh = xhat->data() + off;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dyx += static_cast<double>(dy[i]) * xh[i];
          }
        }
        if (need_g) gp.grad[c] += static_cast<T>(sum_dyx);
        if (need_b) bp.grad[c] += static_cast<T>(sum_dy);
        if (need_x) {
          const double scale = gp.data[c] * inv_std[c];
          if (training) {
            const double s1 = sum_dy / static_cast<double>(m);
            const double s2 = sum_dyx / static_cast<double>(m);
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t off = (n * C + c) * plane;
              const T* dy = self.grad.data() + off;
              const T* xh = xhat->data() + off;
              T* dx = xp.grad.data() + off;
              for (std::size_t i = 0; i < plane; ++i) {
                dx[i] += static_cast<T>(scale * (dy[i] - s1 - xh[i] * s2));
              }
            }
          } else {
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t off = (n * C + c) * plane;
              const T* dy = self.grad.data() + off;
              T* dx = xp.grad.data() + off;
              for (std::size_t i = 0; i < plane; ++i) {
                dx[i] += static_cast<T>(scale * dy[i]);
              }
            }
          }
        }
      }
    };
  }
  return detail_wrap_node(std::move(node));
}

template Tensor<float> batchnorm2d(const Tensor<float>&,
                                   BatchNormState<float>&, bool);
template Tensor<double> batchnorm2d(const Tensor<double>&,
                                    BatchNormState<double>&, bool);

template <typename T>
Tensor<T> bs_block(const Tensor<T>& x, const Conv2dSpec<T>& conv,
                   BatchNormState<T>& bn, const SeluParams& p,
                   BlockOrder order, bool training) {
  Tensor<T> y = conv.transposed
                    ? conv_transpose2d(x, conv.weight, conv.stride,
                                       conv.padding)
                    : conv2d(x, conv.weight, conv.stride, conv.padding);
  if (order == BlockOrder::act_then_norm) {
    return batchnorm2d(selu(y, p), bn, training);
  }
  return selu(batchnorm2d(y, bn, training), p);
}

template Tensor<float> bs_block(const Tensor<float>&, const Conv2dSpec<float>&,
                                BatchNormState<float>&, const SeluParams&,
                                BlockOrder, bool);
template Tensor<double> bs_block(const Tensor<double>&,
                                 const Conv2dSpec<double>&,
                                 BatchNormState<double>&, const SeluParams&,
                                 BlockOrder, bool);

}  // namespace hdc
