#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hdcgan/layers.hpp"
#include "hdcgan/tensor.hpp"

namespace hdc {

enum class Interpolation { bilinear, nearest };
enum class Role { generator, discriminator };

/// Shape contract shared by both networks. base (N, M) is the
/// pre-telescope size; the telescope factors (zeta1, zeta2) enlarge it
/// to the effective size, which must come out square, a power of two,
/// and at least 8. Depth follows the effective size alone.
struct NetworkConfig {
  std::size_t base_height = 32;
  std::size_t base_width = 32;
  std::size_t zeta1 = 1;
  std::size_t zeta2 = 1;
  std::size_t latent_dim = 100;
  std::size_t n_filters = 64;
  std::size_t channels = 3;

  std::size_t effective_height() const { return zeta1 * base_height; }
  std::size_t effective_width() const { return zeta2 * base_width; }
  std::size_t effective_size() const { return effective_height(); }

  void validate() const;
};

/// log2(effective_size) - 1: size 32 gives 4 blocks, 256 gives 7.
/// effective_size must be a power of two >= 8.
std::size_t layer_count(std::size_t effective_size);

/// Telescope enlargement: scales H and W by integer factors with the
/// chosen interpolation, kernel sizes elsewhere untouched. Accepts
/// [C,H,W] or [N,C,H,W]; the result carries no gradient graph. The
/// resulting H and W must be powers of two.
template <typename T>
Tensor<T> apply_glasses(const Tensor<T>& image, std::size_t zeta1,
                        std::size_t zeta2,
                        Interpolation interp = Interpolation::bilinear);

template <typename T>
struct Block {
  Conv2dSpec<T> conv;
  Tensor<T> bias;         // final block only; undefined elsewhere
  BatchNormState<T> bn;   // BS blocks only; channels()==0 on the final
};

/// An ordered stack of blocks with a role tag. All kernels are 4x4;
/// non-final blocks are BS blocks (no conv bias, BatchNorm beta covers
/// the shift), the final block is conv + bias + tanh (generator) or
/// sigmoid (discriminator).
template <typename T>
struct Network {
  Role role = Role::generator;
  NetworkConfig config;
  SeluParams selu_params;
  BlockOrder order = BlockOrder::act_then_norm;
  std::vector<Block<T>> blocks;

  /// Generator: [N, latent] or [N, latent, 1, 1] -> [N, channels, S, S].
  /// Discriminator: [N, channels, S, S] -> [N] in (0,1).
  Tensor<T> forward(const Tensor<T>& input, bool training);

  /// Trainable tensors in a fixed order (weights, biases, gamma, beta).
  std::vector<Tensor<T>> parameters();
  /// Parameters plus running buffers, keyed "blockK.weight",
  /// "blockK.bn.gamma", ..., for serialization.
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors();
  void set_parameters_requires_grad(bool value);
};

/// Latent (latent_dim,1,1) -> 4x4 -> doubling BS up-sampling blocks ->
/// channels with tanh. Widths halve from min(n_filters * 2^(L-2),
/// 8 * n_filters) down to n_filters, then the image layer.
template <typename T>
Network<T> build_generator(const NetworkConfig& cfg, RngStream& rng,
                           BlockOrder order = BlockOrder::act_then_norm,
                           const SeluParams& p = {});

/// Image -> halving BS conv blocks with doubling widths (capped at
/// 8 * n_filters) -> 4x4 -> scalar with sigmoid.
template <typename T>
Network<T> build_discriminator(const NetworkConfig& cfg, RngStream& rng,
                               BlockOrder order = BlockOrder::act_then_norm,
                               const SeluParams& p = {});

}  // namespace hdc
