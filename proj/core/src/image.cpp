#include "hdcgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace hdc {

namespace {

void check_image(const Image& img, const char* who) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error(std::string(who) + ": channels must be 1 or 3, got " +
                std::to_string(img.channels));
  }
  if (img.pixels.size() != img.channels * img.height * img.width) {
    throw Error(std::string(who) + ": pixel buffer size mismatch");
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---- PNG ----

Image load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png info allocation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> storage;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("undecodable png: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  }
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);

  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  const std::size_t ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unsupported png channel count " + std::to_string(ch));
  }
  storage.resize(h * w * ch);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = storage.data() + y * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(ch, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        img.at(c, y, x) = storage[(y * w + x) * ch + c] / 255.0f;
      }
    }
  }
  return img;
}

// ---- PNM ----

int pnm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw Error("truncated pnm header");
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v;
  if (!(in >> v) || v < 0) throw Error("malformed pnm header");
  return v;
}

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P') throw Error("not a pnm file: " + path.string());
  const char kind = magic[1];
  const bool ascii = kind == '2' || kind == '3';
  const bool gray = kind == '2' || kind == '5';
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw Error("unsupported pnm variant P" + std::string(1, kind));
  }
  const std::size_t w = static_cast<std::size_t>(pnm_next_token(in));
  const std::size_t h = static_cast<std::size_t>(pnm_next_token(in));
  const int maxval = pnm_next_token(in);
  if (w == 0 || h == 0 || maxval <= 0 || maxval > 65535) {
    throw Error("malformed pnm dimensions in " + path.string());
  }
  const std::size_t ch = gray ? 1 : 3;
  Image img(ch, h, w);
  const float scale = 1.0f / maxval;

  if (ascii) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < ch; ++c)
          img.at(c, y, x) = pnm_next_token(in) * scale;
    return img;
  }

  in.get();  // single whitespace after maxval
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * ch * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error("truncated pnm data in " + path.string());
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = ((y * w + x) * ch + c) * bytes_per;
        const unsigned v = bytes_per == 2 ? (raw[i] << 8) | raw[i + 1] : raw[i];
        img.at(c, y, x) = v * scale;
      }
    }
  }
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, static_cast<std::size_t>(
                              std::max<std::streamsize>(0, 8))) == 0) {
    return load_png(path);
  }
  if (sig[0] == 'P' && sig[1] >= '2' && sig[1] <= '6') {
    return load_pnm(path);
  }
  throw Error("unrecognized image format: " + path.string());
}

void save_png(const Image& image, const std::filesystem::path& path) {
  check_image(image, "save_png");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const int color =
      image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(image.width * image.channels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        row[x * image.channels + c] = to_byte(image.at(c, y, x));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pnm(const Image& image, const std::filesystem::path& path) {
  check_image(image, "save_pnm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(image.width * image.channels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        row[x * image.channels + c] = to_byte(image.at(c, y, x));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw Error("short write to " + path.string());
}

// ---- resampling ----

namespace {

struct FilterTap {
  std::size_t first;
  std::vector<float> weights;
};

// Triangle kernel, widened by the scale factor on downscale so the
// footprint covers every contributing source pixel. Out-of-range taps
// fold onto the border pixel (clamp-to-edge).
std::vector<FilterTap> triangle_taps(std::size_t in, std::size_t out) {
  const double ratio = static_cast<double>(in) / out;
  const double support = std::max(1.0, ratio);
  const long last_in = static_cast<long>(in) - 1;
  std::vector<FilterTap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double center = (o + 0.5) * ratio - 0.5;
    const long lo = static_cast<long>(std::ceil(center - support));
    const long hi = static_cast<long>(std::floor(center + support));
    const long first = std::clamp(lo, 0L, last_in);
    const long last = std::clamp(hi, 0L, last_in);
    std::vector<double> w(static_cast<std::size_t>(last - first + 1), 0.0);
    double sum = 0;
    for (long s = lo; s <= hi; ++s) {
      const double t = std::abs(s - center) / support;
      const double v = t < 1.0 ? 1.0 - t : 0.0;
      if (v <= 0) continue;
      w[static_cast<std::size_t>(std::clamp(s, 0L, last_in) - first)] += v;
      sum += v;
    }
    if (sum <= 0) {
      w.assign(1, 1.0);
      sum = 1.0;
    }
    FilterTap tap;
    tap.first = static_cast<std::size_t>(first);
    tap.weights.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      tap.weights[i] = static_cast<float>(w[i] / sum);
    }
    taps[o] = std::move(tap);
  }
  return taps;
}

}  // namespace

Image resize(const Image& image, std::size_t out_height,
             std::size_t out_width) {
  check_image(image, "resize");
  if (out_height == 0 || out_width == 0) {
    throw Error("resize target must be positive");
  }
  if (out_height == image.height && out_width == image.width) return image;

  const auto htaps = triangle_taps(image.width, out_width);
  const auto vtaps = triangle_taps(image.height, out_height);

  // Horizontal pass, then vertical.
  Image mid(image.channels, image.height, out_width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < out_width; ++x) {
        const FilterTap& t = htaps[x];
        double acc = 0;
        for (std::size_t i = 0; i < t.weights.size(); ++i) {
          acc += t.weights[i] * image.at(c, y, t.first + i);
        }
        mid.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  Image out(image.channels, out_height, out_width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < out_height; ++y) {
      const FilterTap& t = vtaps[y];
      for (std::size_t x = 0; x < out_width; ++x) {
        double acc = 0;
        for (std::size_t i = 0; i < t.weights.size(); ++i) {
          acc += t.weights[i] * mid.at(c, t.first + i, x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image center_crop_square(const Image& image) {
  check_image(image, "center_crop_square");
  const std::size_t side = std::min(image.height, image.width);
  const std::size_t x0 = (image.width - side) / 2;
  const std::size_t y0 = (image.height - side) / 2;
  return crop(image, x0, y0, side, side);
}

Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t w,
           std::size_t h) {
  check_image(image, "crop");
  if (x >= image.width || y >= image.height) {
    throw Error("crop origin outside image");
  }
  const std::size_t cw = std::min(w, image.width - x);
  const std::size_t ch = std::min(h, image.height - y);
  if (cw == 0 || ch == 0) throw Error("empty crop");
  Image out(image.channels, ch, cw);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t yy = 0; yy < ch; ++yy) {
      const float* src = &image.at(c, y + yy, x);
      std::copy(src, src + cw, &out.at(c, yy, 0));
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  check_image(image, "flip_horizontal");
  Image out(image.channels, image.height, image.width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
      }
    }
  }
  return out;
}

Image luminance(const Image& image) {
  check_image(image, "luminance");
  if (image.channels == 1) return image;
  Image out(1, image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      out.at(0, y, x) = 0.299f * image.at(0, y, x) +
                        0.587f * image.at(1, y, x) +
                        0.114f * image.at(2, y, x);
    }
  }
  return out;
}

Image tile_grid(const std::vector<Image>& images, std::size_t cols) {
  if (images.empty()) throw Error("tile_grid: no images");
  if (cols == 0) throw Error("tile_grid: cols must be positive");
  const Image& first = images.front();
  check_image(first, "tile_grid");
  for (const Image& im : images) {
    if (im.channels != first.channels || im.height != first.height ||
        im.width != first.width) {
      throw Error("tile_grid: images must share one shape");
    }
  }
  const std::size_t rows = (images.size() + cols - 1) / cols;
  Image out(first.channels, rows * first.height, cols * first.width, 0.0f);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::size_t r = i / cols, col = i % cols;
    for (std::size_t c = 0; c < first.channels; ++c) {
      for (std::size_t y = 0; y < first.height; ++y) {
        const float* src = &images[i].at(c, y, 0);
        float* dst =
            &out.at(c, r * first.height + y, col * first.width);
        std::copy(src, src + first.width, dst);
      }
    }
  }
  return out;
}

// ---- tensor bridges ----

TensorF image_to_tensor(const Image& image) {
  check_image(image, "image_to_tensor");
  std::vector<float> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = 2.0f * image.pixels[i] - 1.0f;
  }
  return TensorF(Shape{image.channels, image.height, image.width},
                 std::move(v));
}

TensorF batch_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw Error("batch_to_tensor: no images");
  const Image& first = images.front();
  check_image(first, "batch_to_tensor");
  const std::size_t per = first.pixels.size();
  std::vector<float> v(images.size() * per);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.channels != first.channels || im.height != first.height ||
        im.width != first.width) {
      throw Error("batch_to_tensor: images must share one shape");
    }
    for (std::size_t j = 0; j < per; ++j) {
      v[i * per + j] = 2.0f * im.pixels[j] - 1.0f;
    }
  }
  return TensorF(
      Shape{images.size(), first.channels, first.height, first.width},
      std::move(v));
}

Image tensor_to_image(const TensorF& tensor) {
  if (tensor.rank() != 3) {
    throw Error("tensor_to_image expects [C,H,W], got " +
                shape_str(tensor.shape()));
  }
  const Shape& s = tensor.shape();
  Image out(s[0], s[1], s[2]);
  auto d = tensor.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.pixels[i] = std::clamp((d[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
  }
  return out;
}

std::vector<Image> batch_to_images(const TensorF& tensor) {
  if (tensor.rank() != 4) {
    throw Error("batch_to_images expects [N,C,H,W], got " +
                shape_str(tensor.shape()));
  }
  const Shape& s = tensor.shape();
  std::vector<Image> out;
  out.reserve(s[0]);
  const std::size_t per = s[1] * s[2] * s[3];
  auto d = tensor.data();
  for (std::size_t n = 0; n < s[0]; ++n) {
    Image im(s[1], s[2], s[3]);
    for (std::size_t i = 0; i < per; ++i) {
      im.pixels[i] = std::clamp((d[n * per + i] + 1.0f) * 0.5f, 0.0f, 1.0f);
    }
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace hdc
