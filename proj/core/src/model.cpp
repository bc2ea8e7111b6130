#include "hdcgan/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace hdc {

namespace {

bool power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

constexpr std::size_t kKernel = 4;

std::size_t block_width(std::size_t index_from_image, std::size_t n_filters) {
  // Widths double away from the image end and cap at 8 * n_filters.
  const std::size_t cap = 8 * n_filters;
  std::size_t w = n_filters;
  for (std::size_t i = 1; i < index_from_image && w < cap; ++i) w *= 2;
  return std::min(w, cap);
}

template <typename T>
Tensor<T> init_weight(Shape shape, RngStream& rng) {
  // Centered Gaussian, variance 1/fan-in; keeps (omega, tau) near (0, 1)
  // for unit-variance inputs.
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  return Tensor<T>::normal(std::move(shape), rng, 0.0,
                           1.0 / std::sqrt(static_cast<double>(fan_in)), true);
}

// Transposed kernels store [in, out, kh, kw]; fan-in is the input side.
template <typename T>
Tensor<T> init_weight_transposed(Shape shape, RngStream& rng) {
  const std::size_t fan_in = shape[0] * shape[2] * shape[3];
  return Tensor<T>::normal(std::move(shape), rng, 0.0,
                           1.0 / std::sqrt(static_cast<double>(fan_in)), true);
}

}  // namespace

void NetworkConfig::validate() const {
  if (zeta1 < 1 || zeta2 < 1) throw Error("telescope factors must be >= 1");
  if (latent_dim < 1) throw Error("latent_dim must be >= 1");
  if (n_filters < 1) throw Error("n_filters must be >= 1");
  if (channels < 1) throw Error("channels must be >= 1");
  const std::size_t h = effective_height(), w = effective_width();
  if (h != w) {
    throw Error("effective size must be square, got " + std::to_string(h) +
                "x" + std::to_string(w));
  }
  if (!power_of_two(h) || h < 8) {
    throw Error("effective size must be a power of two >= 8, got " +
                std::to_string(h));
  }
}

std::size_t layer_count(std::size_t effective_size) {
  if (!power_of_two(effective_size) || effective_size < 8) {
    throw Error("layer_count needs a power-of-two size >= 8, got " +
                std::to_string(effective_size));
  }
  return static_cast<std::size_t>(std::bit_width(effective_size)) - 2;
}

// ---- glasses ----

namespace {

template <typename T>
void resize_plane_nearest(const T* src, std::size_t h, std::size_t w, T* dst,
                          std::size_t oh, std::size_t ow) {
  for (std::size_t y = 0; y < oh; ++y) {
    const std::size_t sy = std::min(y * h / oh, h - 1);
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t sx = std::min(x * w / ow, w - 1);
      dst[y * ow + x] = src[sy * w + sx];
    }
  }
}

template <typename T>
void resize_plane_bilinear(const T* src, std::size_t h, std::size_t w, T* dst,
                           std::size_t oh, std::size_t ow) {
  const double ry = static_cast<double>(h) / oh;
  const double rx = static_cast<double>(w) / ow;
  for (std::size_t y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * ry - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * rx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
      const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
      dst[y * ow + x] = static_cast<T>(top * (1 - wy) + bot * wy);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> apply_glasses(const Tensor<T>& image, std::size_t zeta1,
                        std::size_t zeta2, Interpolation interp) {
  if (zeta1 < 1 || zeta2 < 1) throw Error("telescope factors must be >= 1");
  const Shape& s = image.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw Error("apply_glasses expects [C,H,W] or [N,C,H,W], got " +
                shape_str(s));
  }
  const std::size_t n = s.size() == 4 ? s[0] : 1;
  const std::size_t c = s[s.size() - 3];
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  const std::size_t oh = zeta1 * h, ow = zeta2 * w;
  if (!power_of_two(oh) || !power_of_two(ow)) {
    throw Error("telescoped size " + std::to_string(oh) + "x" +
                std::to_string(ow) + " is not a power of two");
  }
  Shape out_shape = s;
  out_shape[s.size() - 2] = oh;
  out_shape[s.size() - 1] = ow;
  Tensor<T> out(out_shape, T(0), false);
  const T* src = image.data().data();
  T* dst = out.raw_data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    if (interp == Interpolation::nearest) {
      resize_plane_nearest(src + p * h * w, h, w, dst + p * oh * ow, oh, ow);
    } else {
      resize_plane_bilinear(src + p * h * w, h, w, dst + p * oh * ow, oh, ow);
    }
  }
  return out;
}

template Tensor<float> apply_glasses(const Tensor<float>&, std::size_t,
                                     std::size_t, Interpolation);
template Tensor<double> apply_glasses(const Tensor<double>&, std::size_t,
                                      std::size_t, Interpolation);

// ---- network construction ----

template <typename T>
Network<T> build_generator(const NetworkConfig& cfg, RngStream& rng,
                           BlockOrder order, const SeluParams& p) {
  cfg.validate();
  const std::size_t L = layer_count(cfg.effective_size());
  Network<T> net;
  net.role = Role::generator;
  net.config = cfg;
  net.selu_params = p;
  net.order = order;
  net.blocks.reserve(L);

  // Block i (1-based) outputs width(L - i) channels; the final block
  // emits the image.
  std::size_t in_ch = cfg.latent_dim;
  for (std::size_t i = 1; i <= L; ++i) {
    Block<T> b;
    if (i == 1) {
      // 1x1 -> 4x4
      b.conv.stride = 1;
      b.conv.padding = 0;
    } else {
      b.conv.stride = 2;
      b.conv.padding = 1;
    }
    b.conv.transposed = true;
    const bool last = (i == L);
    const std::size_t out_ch =
        last ? cfg.channels : block_width(L - i, cfg.n_filters);
    b.conv.weight =
        init_weight_transposed<T>({in_ch, out_ch, kKernel, kKernel}, rng);
    if (last) {
      b.bias = Tensor<T>(Shape{out_ch, 1, 1}, T(0), true);
    } else {
      b.bn = BatchNormState<T>(out_ch);
    }
    net.blocks.push_back(std::move(b));
    in_ch = out_ch;
  }
  return net;
}

template <typename T>
Network<T> build_discriminator(const NetworkConfig& cfg, RngStream& rng,
                               BlockOrder order, const SeluParams& p) {
  cfg.validate();
  const std::size_t L = layer_count(cfg.effective_size());
  Network<T> net;
  net.role = Role::discriminator;
  net.config = cfg;
  net.selu_params = p;
  net.order = order;
  net.blocks.reserve(L);

  std::size_t in_ch = cfg.channels;
  for (std::size_t i = 1; i <= L; ++i) {
    Block<T> b;
    const bool last = (i == L);
    if (last) {
      // 4x4 -> 1x1 scalar map
      b.conv.stride = 1;
      b.conv.padding = 0;
    } else {
      b.conv.stride = 2;
      b.conv.padding = 1;
    }
    const std::size_t out_ch = last ? 1 : block_width(i, cfg.n_filters);
    b.conv.weight = init_weight<T>({out_ch, in_ch, kKernel, kKernel}, rng);
    if (last) {
      b.bias = Tensor<T>(Shape{out_ch, 1, 1}, T(0), true);
    } else {
      b.bn = BatchNormState<T>(out_ch);
    }
    net.blocks.push_back(std::move(b));
    in_ch = out_ch;
  }
  return net;
}

template Network<float> build_generator(const NetworkConfig&, RngStream&,
                                        BlockOrder, const SeluParams&);
template Network<double> build_generator(const NetworkConfig&, RngStream&,
                                         BlockOrder, const SeluParams&);
template Network<float> build_discriminator(const NetworkConfig&, RngStream&,
                                            BlockOrder, const SeluParams&);
template Network<double> build_discriminator(const NetworkConfig&, RngStream&,
                                             BlockOrder, const SeluParams&);

// ---- forward ----

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, bool training) {
  Tensor<T> h = input;
  const std::size_t S = config.effective_size();
  if (role == Role::generator) {
    if (h.rank() == 2) {
      h = reshape(h, Shape{h.shape()[0], h.shape()[1], 1, 1});
    }
    if (h.rank() != 4 || h.shape()[1] != config.latent_dim ||
        h.shape()[2] != 1 || h.shape()[3] != 1) {
      throw Error("generator input must be [N," +
                  std::to_string(config.latent_dim) + ",1,1], got " +
                  shape_str(input.shape()));
    }
  } else {
    if (h.rank() != 4 || h.shape()[1] != config.channels ||
        h.shape()[2] != S || h.shape()[3] != S) {
      throw Error("discriminator input must be [N," +
                  std::to_string(config.channels) + "," + std::to_string(S) +
                  "," + std::to_string(S) + "], got " +
                  shape_str(input.shape()));
    }
  }

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Block<T>& b = blocks[i];
    if (i + 1 < blocks.size()) {
      h = bs_block(h, b.conv, b.bn, selu_params, order, training);
      continue;
    }
    Tensor<T> y = b.conv.transposed
                      ? conv_transpose2d(h, b.conv.weight, b.conv.stride,
                                         b.conv.padding)
                      : conv2d(h, b.conv.weight, b.conv.stride, b.conv.padding);
    y = y + b.bias;
    h = role == Role::generator ? tanh(y) : sigmoid(y);
  }
  if (role == Role::discriminator) h = reshape(h, Shape{h.shape()[0]});
  return h;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::parameters() {
  std::vector<Tensor<T>> out;
  for (Block<T>& b : blocks) {
    out.push_back(b.conv.weight);
    if (b.bias.defined()) out.push_back(b.bias);
    if (b.bn.channels() > 0) {
      out.push_back(b.bn.gamma);
      out.push_back(b.bn.beta);
    }
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Network<T>::named_tensors() {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Block<T>& b = blocks[i];
    const std::string prefix = "block" + std::to_string(i + 1) + ".";
    out.emplace_back(prefix + "weight", b.conv.weight);
    if (b.bias.defined()) out.emplace_back(prefix + "bias", b.bias);
    if (b.bn.channels() > 0) {
      out.emplace_back(prefix + "bn.gamma", b.bn.gamma);
      out.emplace_back(prefix + "bn.beta", b.bn.beta);
      out.emplace_back(prefix + "bn.running_mean", b.bn.running_mean);
      out.emplace_back(prefix + "bn.running_var", b.bn.running_var);
    }
  }
  return out;
}

template <typename T>
void Network<T>::set_parameters_requires_grad(bool value) {
  for (Tensor<T>& t : parameters()) t.set_requires_grad(value);
}

template struct Network<float>;
template struct Network<double>;

}  // namespace hdc
