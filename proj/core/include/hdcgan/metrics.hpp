#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hdcgan/image.hpp"
#include "hdcgan/tensor.hpp"

namespace hdc {

/// The metric's standard five-scale weights (0.0448, 0.2856, 0.3001,
/// 0.2363, 0.1333) rescaled to sum to exactly 1; the published
/// constants are rounded and add up to 1.0001.
std::vector<double> default_scale_weights();

/// Multi-scale SSIM configuration. Defaults are the metric's standard
/// parameters: five scales, an 11x11 Gaussian window with sigma 1.5,
/// and stability constants C1 = (k1 L)^2, C2 = (k2 L)^2 over dynamic
/// range L.
struct MsSsimConfig {
  std::size_t scales = 5;
  std::vector<double> scale_weights = default_scale_weights();
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return k1 * k1 * dynamic_range * dynamic_range; }
  double c2() const { return k2 * k2 * dynamic_range * dynamic_range; }
  void validate() const;
};

/// RGB inputs are reduced to luminance. Windows use symmetric
/// (reflected) padding so every scale keeps its full map; scales after
/// the first are reached by 2x2 mean pooling. Contrast-structure terms
/// are clamped at zero before geometric weighting. Every scale must
/// keep min(h, w) >= (window+1)/2, otherwise the pyramid is too small.
double ms_ssim(const Image& a, const Image& b, const MsSsimConfig& cfg = {});

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t pairs = 0;
  std::size_t resize = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_pair;  // empty unless per-pair values kept

  /// value must equal the mean of per_pair when per_pair is present.
  void validate() const;
};

void write_report_json(const MetricReport& report,
                       const std::filesystem::path& path);
/// Appends nothing; writes one header and one row:
/// metric,value,pairs,resize,seed
void write_report_csv(const MetricReport& report,
                      const std::filesystem::path& path);

/// Evaluation protocol defaults: MS-SSIM averages 10,000 sampled pairs
/// at a 128x128 resize; the Fréchet pipeline resizes to 64x64 before
/// feature extraction.
inline constexpr std::size_t kMsssimProtocolPairs = 10000;
inline constexpr std::size_t kMsssimProtocolResize = 128;
inline constexpr std::size_t kFdProtocolResize = 64;

/// Averages ms_ssim over `pairs` random image pairs. The two members
/// of a pair are always distinct; pairs themselves may repeat across
/// draws. Images are resized to resize x resize first.
MetricReport msssim_protocol(const std::vector<Image>& images,
                             std::size_t pairs, std::size_t resize,
                             RngStream& rng,
                             const MsSsimConfig& cfg = {},
                             bool keep_per_pair = false);

/// Mean and unbiased (n-1) sample covariance, symmetrized. covariance
/// is row-major dim x dim.
struct GaussianSummary {
  std::vector<double> mean;
  std::vector<double> covariance;

  std::size_t dim() const { return mean.size(); }
  void validate() const;
};

GaussianSummary fit_gaussian(const std::vector<std::vector<double>>& features);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}), the matrix root
/// taken in the symmetric form S2^{1/2} S1 S2^{1/2} with eigenvalues
/// clamped at zero. Requires matching dimensions and (numerically) PSD
/// covariances.
double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2);

/// Deterministic feature extraction for the Fréchet metric. Specs:
///   pixels:<K>            flatten after resizing to K x K (dim 3KK)
///   randproj:<D>[:<seed>] fixed-seed Gaussian projection of the
///                         flattened pixels to D dimensions
///   file:<path>           pass-through of an external feature file
///                         (images ignored)
/// Inception embeddings are out of scope; paper-comparable FD numbers
/// require supplying them through file:.
std::vector<std::vector<double>> extract_features(
    const std::vector<Image>& images, const std::string& spec);

/// Feature file: one header line "n d", then either n CSV rows of d
/// values or n*d raw little-endian doubles. Detected by content.
std::vector<std::vector<double>> read_feature_file(
    const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& features,
                        bool raw = false);

/// Pixel-space L2 neighbors, ascending distance, ties broken by the
/// lower index. All corpus images must match the query's shape.
std::vector<std::pair<std::size_t, double>> nearest_neighbors(
    const Image& query, const std::vector<Image>& corpus, std::size_t k = 5);

}  // namespace hdc
