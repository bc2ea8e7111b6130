#include "hdcgan/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"

namespace hdc {

std::vector<double> default_scale_weights() {
  std::vector<double> w = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double sum = 0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

void MsSsimConfig::validate() const {
  if (scales == 0) throw Error("ms-ssim needs at least one scale");
  if (scale_weights.size() != scales) {
    throw Error("ms-ssim has " + std::to_string(scales) + " scales but " +
                std::to_string(scale_weights.size()) + " weights");
  }
  double sum = 0;
  for (double w : scale_weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error("ms-ssim scale weights must sum to 1");
  }
  if (window < 3 || window % 2 == 0) {
    throw Error("ms-ssim window must be odd and >= 3");
  }
  if (!(sigma > 0)) throw Error("ms-ssim window sigma must be positive");
  if (!(k1 > 0) || !(k2 > 0) || !(dynamic_range > 0)) {
    throw Error("ms-ssim stability constants must be positive");
  }
}

namespace {

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;

  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

Plane to_plane(const Image& img) {
  Image gray = img.channels == 1 ? img : luminance(img);
  Plane p;
  p.h = gray.height;
  p.w = gray.width;
  p.v.assign(gray.pixels.begin(), gray.pixels.end());
  return p;
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double h = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - h;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

// index reflected symmetrically: -1 -> 0, -2 -> 1, n -> n-1, ...
std::size_t reflect(long i, long n) {
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - 1 - i;
  return static_cast<std::size_t>(i);
}

Plane filter_separable(const Plane& p, const std::vector<double>& win) {
  const long r = static_cast<long>(win.size() / 2);
  Plane tmp{p.h, p.w, std::vector<double>(p.v.size())};
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < p.w; ++x) {
      double acc = 0;
      for (long k = -r; k <= r; ++k) {
        acc += win[static_cast<std::size_t>(k + r)] *
               p.at(y, reflect(static_cast<long>(x) + k,
                               static_cast<long>(p.w)));
      }
      tmp.v[y * p.w + x] = acc;
    }
  }
  Plane out{p.h, p.w, std::vector<double>(p.v.size())};
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < p.w; ++x) {
      double acc = 0;
      for (long k = -r; k <= r; ++k) {
        acc += win[static_cast<std::size_t>(k + r)] *
               tmp.at(reflect(static_cast<long>(y) + k,
                              static_cast<long>(p.h)),
                      x);
      }
      out.v[y * p.w + x] = acc;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      out.v[y * out.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                  p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

// Per-scale SSIM means: luminance term and contrast-structure term.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b,
                                     const std::vector<double>& win,
                                     double c1, double c2) {
  Plane mu_a = filter_separable(a, win);
  Plane mu_b = filter_separable(b, win);
  Plane aa = filter_separable(product(a, a), win);
  Plane bb = filter_separable(product(b, b), win);
  Plane ab = filter_separable(product(a, b), win);
  double l_sum = 0, cs_sum = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = std::max(0.0, aa.v[i] - ma * ma);
    const double vb = std::max(0.0, bb.v[i] - mb * mb);
    const double cov = ab.v[i] - ma * mb;
    l_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs_sum += (2.0 * cov + c2) / (va + vb + c2);
  }
  const double n = static_cast<double>(a.v.size());
  return {l_sum / n, cs_sum / n};
}

}  // namespace

double ms_ssim(const Image& a, const Image& b, const MsSsimConfig& cfg) {
  cfg.validate();
  if (a.channels != b.channels || a.height != b.height ||
      a.width != b.width) {
    throw Error("ms-ssim inputs must share a shape");
  }
  Plane pa = to_plane(a);
  Plane pb = to_plane(b);
  const auto win = gaussian_window(cfg.window, cfg.sigma);
  const std::size_t min_dim = (cfg.window + 1) / 2;
  const double c1 = cfg.c1(), c2 = cfg.c2();

  double value = 1.0;
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    if (pa.h < min_dim || pa.w < min_dim) {
      throw Error("images too small for the scale pyramid: scale " +
                  std::to_string(s + 1) + " is " + std::to_string(pa.w) +
                  "x" + std::to_string(pa.h));
    }
    auto [l, cs] = ssim_terms(pa, pb, win, c1, c2);
    const bool coarsest = s + 1 == cfg.scales;
    const double term = coarsest ? l * cs : cs;
    value *= std::pow(std::max(0.0, term), cfg.scale_weights[s]);
    if (!coarsest) {
      pa = downsample2(pa);
      pb = downsample2(pb);
    }
  }
  return value;
}

void MetricReport::validate() const {
  if (per_pair.empty()) return;
  double acc = 0;
  for (double v : per_pair) acc += v;
  if (std::abs(value - acc / static_cast<double>(per_pair.size())) > 1e-9) {
    throw Error("report value disagrees with its per-pair mean");
  }
}

void write_report_json(const MetricReport& report,
                       const std::filesystem::path& path) {
  report.validate();
  nlohmann::ordered_json j;
  j["metric"] = report.metric;
  j["value"] = report.value;
  j["protocol"] = {{"pairs", report.pairs},
                   {"resize", report.resize},
                   {"seed", report.seed}};
  if (!report.per_pair.empty()) j["per_pair"] = report.per_pair;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_report_csv(const MetricReport& report,
                      const std::filesystem::path& path) {
  report.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char line[256];
  std::snprintf(line, sizeof line, "%s,%.17g,%zu,%zu,%llu\n",
                report.metric.c_str(), report.value, report.pairs,
                report.resize,
                static_cast<unsigned long long>(report.seed));
  out << "metric,value,pairs,resize,seed\n" << line;
}

MetricReport msssim_protocol(const std::vector<Image>& images,
                             std::size_t pairs, std::size_t resize_to,
                             RngStream& rng, const MsSsimConfig& cfg,
                             bool keep_per_pair) {
  if (images.size() < 2) {
    throw Error("ms-ssim protocol needs at least 2 images");
  }
  if (pairs == 0) throw Error("pair count must be positive");
  std::vector<Image> gray;
  gray.reserve(images.size());
  for (const Image& img : images) {
    gray.push_back(luminance(resize(img, resize_to, resize_to)));
  }
  MetricReport report;
  report.metric = "ms_ssim";
  report.pairs = pairs;
  report.resize = resize_to;
  report.seed = rng.seed();
  double acc = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = rng.uniform_below(gray.size());
    std::size_t j = rng.uniform_below(gray.size() - 1);
    if (j >= i) ++j;
    const double v = ms_ssim(gray[i], gray[j], cfg);
    acc += v;
    if (keep_per_pair) report.per_pair.push_back(v);
  }
  report.value = acc / static_cast<double>(pairs);
  return report;
}

void GaussianSummary::validate() const {
  const std::size_t d = mean.size();
  if (covariance.size() != d * d) {
    throw Error("covariance must be dim x dim");
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(covariance[i * d + j] - covariance[j * d + i]) > 1e-10) {
        throw Error("covariance is not symmetric");
      }
    }
  }
  Eigen::Map<const Eigen::MatrixXd> c(covariance.data(),
                                      static_cast<Eigen::Index>(d),
                                      static_cast<Eigen::Index>(d));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.eigenvalues().minCoeff() < -1e-8) {
    throw Error("covariance is not positive semi-definite");
  }
}

GaussianSummary fit_gaussian(
    const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) {
    throw Error("gaussian fit needs at least 2 feature vectors");
  }
  const std::size_t n = features.size();
  const std::size_t d = features[0].size();
  for (const auto& f : features) {
    if (f.size() != d) throw Error("feature dimensions disagree");
  }
  GaussianSummary g;
  g.mean.assign(d, 0.0);
  for (const auto& f : features) {
    for (std::size_t i = 0; i < d; ++i) g.mean[i] += f[i];
  }
  for (double& m : g.mean) m /= static_cast<double>(n);
  g.covariance.assign(d * d, 0.0);
  for (const auto& f : features) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = f[i] - g.mean[i];
      for (std::size_t j = i; j < d; ++j) {
        g.covariance[i * d + j] += di * (f[j] - g.mean[j]);
      }
    }
  }
  const double div = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double v = g.covariance[i * d + j] / div;
      g.covariance[i * d + j] = v;
      g.covariance[j * d + i] = v;
    }
  }
  return g;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2) {
  if (g1.dim() != g2.dim()) {
    throw Error("gaussian summaries have different dimensions");
  }
  g1.validate();
  g2.validate();
  const auto d = static_cast<Eigen::Index>(g1.dim());
  Eigen::Map<const Eigen::MatrixXd> s1(g1.covariance.data(), d, d);
  Eigen::Map<const Eigen::MatrixXd> s2(g2.covariance.data(), d, d);

  double mean_term = 0;
  for (std::size_t i = 0; i < g1.dim(); ++i) {
    const double diff = g1.mean[i] - g2.mean[i];
    mean_term += diff * diff;
  }
  const Eigen::MatrixXd root2 = psd_sqrt(s2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(root2 * s1 * root2);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = mean_term + s1.trace() + s2.trace() - 2.0 * cross;
  return std::max(0.0, fd);
}

namespace {

std::vector<double> flatten(const Image& img) {
  return std::vector<double>(img.pixels.begin(), img.pixels.end());
}

}  // namespace

std::vector<std::vector<double>> extract_features(
    const std::vector<Image>& images, const std::string& spec) {
  if (spec.rfind("file:", 0) == 0) {
    return read_feature_file(spec.substr(5));
  }
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw Error("empty extractor spec");

  if (parts[0] == "pixels") {
    if (parts.size() > 2) throw Error("pixels spec is pixels:<K>");
    const std::size_t k = parts.size() == 2 ? std::stoull(parts[1]) : 8;
    if (k == 0) throw Error("pixels downsample size must be positive");
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const Image& img : images) {
      out.push_back(flatten(resize(img, k, k)));
    }
    return out;
  }
  if (parts[0] == "randproj") {
    if (parts.size() < 2 || parts.size() > 3) {
      throw Error("randproj spec is randproj:<D>[:<seed>]");
    }
    const std::size_t dim = std::stoull(parts[1]);
    if (dim == 0) throw Error("projection dimension must be positive");
    const std::uint64_t seed = parts.size() == 3 ? std::stoull(parts[2]) : 0;
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    std::size_t in_dim = 0;
    std::vector<double> proj;  // dim x in_dim, lazily built
    for (const Image& img : images) {
      auto flat = flatten(img);
      if (proj.empty()) {
        in_dim = flat.size();
        RngStream rng = RngStream::derive(seed, "randproj");
        proj.resize(dim * in_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& v : proj) v = rng.normal() * scale;
      } else if (flat.size() != in_dim) {
        throw Error("randproj inputs must share a shape");
      }
      std::vector<double> f(dim, 0.0);
      for (std::size_t r = 0; r < dim; ++r) {
        double acc = 0;
        for (std::size_t c = 0; c < in_dim; ++c) {
          acc += proj[r * in_dim + c] * flat[c];
        }
        f[r] = acc;
      }
      out.push_back(std::move(f));
    }
    return out;
  }
  throw Error("unknown extractor spec '" + spec + "'");
}

std::vector<std::vector<double>> read_feature_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error("feature file has no header");
  std::size_t n = 0, d = 0;
  {
    std::stringstream header(bytes.substr(0, nl));
    if (!(header >> n >> d) || n == 0 || d == 0) {
      throw Error("feature file header must be 'n d'");
    }
  }
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  const std::size_t body = bytes.size() - nl - 1;
  if (body == n * d * sizeof(double)) {
    std::size_t pos = nl + 1;
    for (auto& row : out) {
      for (double& v : row) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) {
          u |= std::uint64_t{
                   static_cast<std::uint8_t>(bytes[pos + b])}
               << (8 * b);
        }
        v = std::bit_cast<double>(u);
        pos += 8;
      }
    }
    return out;
  }
  std::stringstream body_ss(bytes.substr(nl + 1));
  std::string line;
  for (std::size_t r = 0; r < n; ++r) {
    if (!std::getline(body_ss, line)) {
      throw Error("feature file ends early at row " + std::to_string(r + 1));
    }
    std::stringstream row(line);
    std::string cell;
    for (std::size_t c = 0; c < d; ++c) {
      if (!std::getline(row, cell, ',')) {
        throw Error("feature file row " + std::to_string(r + 1) + " has " +
                    std::to_string(c) + " values, header says " +
                    std::to_string(d));
      }
      out[r][c] = std::stod(cell);
    }
    if (std::getline(row, cell, ',')) {
      throw Error("feature file row " + std::to_string(r + 1) +
                  " has extra values");
    }
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& features,
                        bool raw) {
  if (features.empty()) throw Error("no features to write");
  const std::size_t d = features[0].size();
  for (const auto& f : features) {
    if (f.size() != d) throw Error("feature dimensions disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << features.size() << ' ' << d << '\n';
  if (raw) {
    for (const auto& row : features) {
      for (double v : row) {
        const auto u = std::bit_cast<std::uint64_t>(v);
        char b[8];
        for (int i = 0; i < 8; ++i) {
          b[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
        }
        out.write(b, 8);
      }
    }
  } else {
    char cell[32];
    for (const auto& row : features) {
      for (std::size_t c = 0; c < d; ++c) {
        std::snprintf(cell, sizeof cell, "%.17g", row[c]);
        out << (c ? "," : "") << cell;
      }
      out << '\n';
    }
  }
  if (!out) throw Error("short write to " + path.string());
}

std::vector<std::pair<std::size_t, double>> nearest_neighbors(
    const Image& query, const std::vector<Image>& corpus, std::size_t k) {
  if (corpus.empty()) throw Error("empty corpus");
  if (k == 0 || k > corpus.size()) {
    throw Error("k must be in [1, corpus size]");
  }
  std::vector<std::pair<std::size_t, double>> ranked;
  ranked.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Image& c = corpus[i];
    if (c.channels != query.channels || c.height != query.height ||
        c.width != query.width) {
      throw Error("corpus image " + std::to_string(i) +
                  " does not match the query shape");
    }
    double acc = 0;
    for (std::size_t p = 0; p < c.pixels.size(); ++p) {
      const double dv = static_cast<double>(query.pixels[p]) - c.pixels[p];
      acc += dv * dv;
    }
    ranked.emplace_back(i, std::sqrt(acc));
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second < b.second
                                          : a.first < b.first;
            });
  ranked.resize(k);
  return ranked;
}

}  // namespace hdc
