#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "hdcgan/tensor.hpp"

namespace hdc {

/// Planar CHW pixel buffer, values in [0,1]. channels is 1 (gray) or 3
/// (RGB). Training tensors use the [-1,1] convention instead; the
/// to_tensor / to_image bridges apply the affine map.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t channels, std::size_t height, std::size_t width,
        float fill = 0.0f)
      : channels(channels),
        height(height),
        width(width),
        pixels(channels * height * width, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  const float& at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
};

/// Decodes PNG, PPM (P3/P6) or PGM (P2/P5) by content sniffing.
/// 16-bit samples are scaled to [0,1]; alpha is dropped.
Image load_image(const std::filesystem::path& path);

/// 8-bit PNG, grayscale or RGB depending on image.channels.
void save_png(const Image& image, const std::filesystem::path& path);

/// Binary PPM (P6) / PGM (P5), 8-bit.
void save_pnm(const Image& image, const std::filesystem::path& path);

/// Separable triangle-filter resampling: plain bilinear on upscale,
/// antialiased (widened kernel) on downscale.
Image resize(const Image& image, std::size_t out_height,
             std::size_t out_width);

/// Largest centered square.
Image center_crop_square(const Image& image);

/// Crop with the box clipped to the image bounds; empty result throws.
Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t w,
           std::size_t h);

Image flip_horizontal(const Image& image);

/// BT.601 luminance; identity on single-channel input.
Image luminance(const Image& image);

/// Packs images of identical shape into a rows x cols sheet, row-major,
/// unused cells black.
Image tile_grid(const std::vector<Image>& images, std::size_t cols);

/// [C,H,W] tensor in [-1,1], v = 2p - 1.
TensorF image_to_tensor(const Image& image);

/// [N,C,H,W] batch in [-1,1]; all images must share one shape.
TensorF batch_to_tensor(const std::vector<Image>& images);

/// Inverse bridge; p = (v+1)/2 clamped to [0,1]. Accepts [C,H,W].
Image tensor_to_image(const TensorF& tensor);

/// Splits [N,C,H,W] into N images.
std::vector<Image> batch_to_images(const TensorF& tensor);

}  // namespace hdc
