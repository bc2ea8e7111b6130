#pragma once

#include <cstddef>
#include <span>

#include "hdcgan/tensor.hpp"

namespace hdc {

/// Scaled exponential linear unit coefficients. The defaults are the
/// unique (lambda, alpha) for which unit-Gaussian pre-activations keep
/// their (0,1) moments; solve_selu_fixed_point() recomputes them from
/// the two moment equations.
struct SeluParams {
  double lambda = 1.0507009873554805;
  double alpha = 1.6732632423543772;
};

/// Solves the zero-mean / unit-variance conditions for selu under a
/// standard normal input in closed form (normal cdf terms only).
SeluParams solve_selu_fixed_point();

double selu_value(double x, const SeluParams& p = {});

/// Elementwise lambda*x for x > 0, lambda*alpha*(exp(x)-1) for x <= 0.
/// The derivative at 0 is the right derivative lambda.
template <typename T>
Tensor<T> selu(const Tensor<T>& x, const SeluParams& p = {});

struct MomentPair {
  double mean = 0.0;
  double variance = 0.0;
};

struct WeightMoments {
  double omega = 0.0;  // sum of weights
  double tau = 0.0;    // sum of squared weights
};

template <typename T>
WeightMoments weight_moments(std::span<const T> w);

/// Exact mean/variance of selu(z), z ~ N(mean, variance), from the
/// truncated-Gaussian integrals. Deterministic companion to moment_map.
MomentPair selu_gaussian_moments(double mean, double variance,
                                 const SeluParams& p = {});

/// Monte-Carlo image of the input moments through one layer: the
/// pre-activation is modeled as N(mean*omega, variance*tau), pushed
/// through selu, and summarized by sample mean and unbiased variance.
/// Diagnostic only, never on the training path.
///
/// A zero pre-activation variance short-circuits to the deterministic
/// pair (selu(mean*omega), 0). Otherwise samples must be >= 10^4.
/// Negative input variance or negative tau is an error.
MomentPair moment_map(MomentPair input, double omega, double tau,
                      const SeluParams& p, std::size_t samples,
                      RngStream& rng);

/// Per-channel affine parameters plus running statistics for inference.
/// gamma/beta are learnable; the running buffers never join a graph.
template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels, double momentum = 0.1,
                          double eps = 1e-5);

  std::size_t channels() const {
    return gamma.defined() ? gamma.size() : 0;
  }
};

/// Batch normalization over (N,H,W) per channel.
///
/// Training: standardize by the batch statistics (population variance),
/// apply gamma*xhat + beta, and fold the batch statistics into the
/// running buffers with the configured momentum. Inference: standardize
/// by the running buffers. Backward flows through the standardization
/// in training mode and through the affine map in both modes.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& state,
                      bool training);

/// Order of the nonlinearity relative to the normalization inside a
/// BS block. act_then_norm is the default reading.
enum class BlockOrder { act_then_norm, norm_then_act };

template <typename T>
struct Conv2dSpec {
  Tensor<T> weight;  // [F,C,kh,kw]
  std::size_t stride = 2;
  std::size_t padding = 1;
  bool transposed = false;
};

/// One BS block: conv (or conv-transpose), then selu and batchnorm in
/// the requested order. With the default order the pre-affine output
/// has exact (0,1) per-channel batch statistics in training mode.
template <typename T>
Tensor<T> bs_block(const Tensor<T>& x, const Conv2dSpec<T>& conv,
                   BatchNormState<T>& bn, const SeluParams& p,
                   BlockOrder order, bool training);

}  // namespace hdc
