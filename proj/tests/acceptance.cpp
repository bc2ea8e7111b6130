// Acceptance gate for the pipeline: ten end-to-end criteria, one
// [PASS]/[FAIL] line each, nonzero exit when anything fails. Budgeted
// for a laptop CPU; the slowest criterion is the training smoke run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hdcgan/cli.hpp"
#include "hdcgan/dataset.hpp"
#include "hdcgan/image.hpp"
#include "hdcgan/layers.hpp"
#include "hdcgan/metrics.hpp"
#include "hdcgan/model.hpp"
#include "hdcgan/tensor.hpp"
#include "hdcgan/training.hpp"
#include "support/gradcheck.hpp"
#include "support/ssim_reference.hpp"
#include "support/testutil.hpp"

namespace fs = std::filesystem;
using hdc::Tensor;
using hdc::TensorD;
using hdc::TensorF;

namespace {

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int run_cli_quiet(std::vector<std::string> args) {
  args.insert(args.begin(), "hdcgan");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  testutil::CaptureStdout out;
  testutil::CaptureStderr err;
  return hdc::run(static_cast<int>(argv.size()), argv.data());
}

std::string run_cli_stdout(std::vector<std::string> args) {
  args.insert(args.begin(), "hdcgan");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  testutil::CaptureStdout out;
  testutil::CaptureStderr err;
  hdc::run(static_cast<int>(argv.size()), argv.data());
  return out.stop();
}

// Fixed-weight scalar readout; keeps every output element in the graph
// with a distinct coefficient.
TensorD weighted(const TensorD& x, const TensorD& w) {
  return hdc::sum(hdc::mul(x, w));
}

TensorD probe_weights(const hdc::Shape& shape, std::uint64_t seed) {
  hdc::RngStream rng(seed);
  return TensorD::normal(shape, rng);
}

// ---- 1: gradient checks ----------------------------------------------

void check_gradients() {
  hdc::RngStream rng(101);
  double worst_linear = 0, worst_nonlinear = 0;

  auto linear = [&](testutil::GradCheckResult r) {
    worst_linear = std::max(worst_linear, r.max_err);
  };
  auto nonlinear = [&](testutil::GradCheckResult r) {
    worst_nonlinear = std::max(worst_nonlinear, r.max_err);
  };

  {
    TensorD a = TensorD::normal({2, 3}, rng);
    TensorD b = TensorD::normal({3}, rng);
    TensorD w = probe_weights({2, 3}, 7);
    std::vector<TensorD> leaves{a, b};
    linear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::add(a, b), w); }));
    linear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::sub(a, b), w); }));
    linear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::mul(a, b), w); }));
    linear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::neg(hdc::scale(a, 2.5)), w); }));
    linear(testutil::grad_check(leaves, [&] {
      return hdc::mean(hdc::reshape(hdc::add(a, b), {6}));
    }));
  }
  {
    TensorD a = TensorD::normal({3, 4}, rng);
    TensorD b = TensorD::normal({4, 2}, rng);
    TensorD w = probe_weights({3, 2}, 8);
    std::vector<TensorD> leaves{a, b};
    linear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::matmul(a, b), w); }));
  }
  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    TensorD x = TensorD::normal({2, 3, 6, 6}, rng);
    TensorD k = TensorD::normal({4, 3, 3, 3}, rng);
    const std::size_t side = (6 + 2 - 3) / stride + 1;
    TensorD w = probe_weights({2, 4, side, side}, 9 + stride);
    std::vector<TensorD> leaves{x, k};
    linear(testutil::grad_check(leaves, [&] {
      return weighted(hdc::conv2d(x, k, stride, 1), w);
    }));
  }
  {
    TensorD x = TensorD::normal({2, 3, 4, 4}, rng);
    TensorD k = TensorD::normal({3, 2, 4, 4}, rng);
    TensorD w = probe_weights({2, 2, 8, 8}, 12);
    std::vector<TensorD> leaves{x, k};
    linear(testutil::grad_check(leaves, [&] {
      return weighted(hdc::conv_transpose2d(x, k, 2, 1), w);
    }));
  }
  require(worst_linear < 1e-6,
          "linear-op gradient error " + num(worst_linear) + " >= 1e-6");

  {
    // Values kept away from the leaky_relu kink and the clamp edges.
    std::vector<double> vals{0.31, -0.62, 1.4, -1.7, 0.84, -0.27,
                             2.1,  -0.93, 0.55, -1.2, 0.7,  -0.4};
    TensorD x({3, 4}, vals);
    TensorD w = probe_weights({3, 4}, 13);
    std::vector<TensorD> leaves{x};
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::exp(x), w); }));
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::tanh(x), w); }));
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::sigmoid(x), w); }));
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::leaky_relu(x, 0.2), w); }));
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::selu(x), w); }));
  }
  {
    std::vector<double> pos{0.5, 1.3, 2.2, 0.9, 1.7, 0.31};
    TensorD x({2, 3}, pos);
    TensorD w = probe_weights({2, 3}, 14);
    std::vector<TensorD> leaves{x};
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::log(x), w); }));
  }
  {
    std::vector<double> inside{0.3, -0.7, 0.1, -0.2, 0.55, -0.85};
    TensorD x({2, 3}, inside);
    TensorD w = probe_weights({2, 3}, 15);
    std::vector<TensorD> leaves{x};
    nonlinear(testutil::grad_check(
        leaves, [&] { return weighted(hdc::clamp(x, -1.0, 1.0), w); }));
  }
  {
    TensorD x = TensorD::normal({4, 3, 2, 2}, rng);
    hdc::BatchNormState<double> bn(3);
    TensorD w = probe_weights({4, 3, 2, 2}, 16);
    std::vector<TensorD> leaves{x, bn.gamma, bn.beta};
    nonlinear(testutil::grad_check(leaves, [&] {
      return weighted(hdc::batchnorm2d(x, bn, true), w);
    }));
  }
  for (hdc::BlockOrder order :
       {hdc::BlockOrder::act_then_norm, hdc::BlockOrder::norm_then_act}) {
    TensorD x = TensorD::normal({2, 3, 8, 8}, rng);
    hdc::Conv2dSpec<double> spec;
    spec.weight = TensorD::normal({4, 3, 4, 4}, rng, 0.0, 0.2);
    spec.stride = 2;
    spec.padding = 1;
    hdc::BatchNormState<double> bn(4);
    TensorD w = probe_weights({2, 4, 4, 4}, 17);
    std::vector<TensorD> leaves{x, spec.weight, bn.gamma, bn.beta};
    nonlinear(testutil::grad_check(leaves, [&] {
      return weighted(hdc::bs_block(x, spec, bn, {}, order, true), w);
    }));
  }

  // Full pipeline: both losses against every parameter of both nets.
  hdc::NetworkConfig nc;
  nc.base_height = nc.base_width = 8;
  nc.latent_dim = 4;
  nc.n_filters = 2;
  nc.channels = 3;
  hdc::RngStream init(55);
  auto gen = hdc::build_generator<double>(nc, init);
  auto dis = hdc::build_discriminator<double>(nc, init);
  TensorD real = TensorD::normal({2, 3, 8, 8}, rng, 0.0, 0.5);
  TensorD z = TensorD::normal({2, 4}, rng);

  std::vector<TensorD> leaves = gen.parameters();
  for (const TensorD& p : dis.parameters()) leaves.push_back(p);
  nonlinear(testutil::grad_check(leaves, [&] {
    TensorD d_real = dis.forward(real, true);
    TensorD d_fake = dis.forward(gen.forward(z, true), true);
    return hdc::d_loss(d_real, d_fake);
  }));
  nonlinear(testutil::grad_check(leaves, [&] {
    return hdc::g_loss(dis.forward(gen.forward(z, true), true));
  }));

  require(worst_nonlinear < 1e-4,
          "nonlinear gradient error " + num(worst_nonlinear) + " >= 1e-4");
}

// ---- 2: selu moment map ----------------------------------------------

double selu_power_integral(int k, const hdc::SeluParams& p) {
  // Simpson over [-12, 12]: E[selu(z)^k] under the standard normal.
  const std::size_t n = 40000;
  const double lo = -12.0, hi = 12.0;
  const double step = (hi - lo) / static_cast<double>(n);
  auto f = [&](double z) {
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return std::pow(hdc::selu_value(z, p), k) * phi;
  };
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < n; ++i) {
    acc += f(lo + step * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  }
  return acc * step / 3.0;
}

void check_fixed_point() {
  const hdc::SeluParams p = hdc::solve_selu_fixed_point();
  const double m1 = selu_power_integral(1, p);
  const double m2 = selu_power_integral(2, p);
  const double variance = m2 - m1 * m1;
  // Fourth central moment of selu(z) for the variance standard error.
  const std::size_t quad_n = 40000;
  double m4c = 0;
  {
    const double lo = -12.0, hi = 12.0;
    const double step = (hi - lo) / static_cast<double>(quad_n);
    auto f = [&](double z) {
      const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
      const double d = hdc::selu_value(z, p) - m1;
      return d * d * d * d * phi;
    };
    double acc = f(lo) + f(hi);
    for (std::size_t i = 1; i < quad_n; ++i) {
      acc += f(lo + step * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
    }
    m4c = acc * step / 3.0;
  }

  const std::size_t samples = 100000;
  const double se_mean = std::sqrt(variance / static_cast<double>(samples));
  const double se_var =
      std::sqrt((m4c - variance * variance) / static_cast<double>(samples));

  hdc::RngStream rng = hdc::RngStream::derive(2026, "fixed-point");
  const hdc::MomentPair mc =
      hdc::moment_map({0.0, 1.0}, 0.0, 1.0, p, samples, rng);
  require(std::abs(mc.mean) <= 3.0 * se_mean,
          "moment_map mean " + num(mc.mean) + " outside 3 SE (" +
              num(3.0 * se_mean) + ")");
  require(std::abs(mc.variance - 1.0) <= 3.0 * se_var,
          "moment_map variance " + num(mc.variance) + " outside 3 SE (" +
              num(3.0 * se_var) + ")");

  // Deterministic iteration from (0.5, 1.5) with normalized weights.
  hdc::MomentPair m{0.5, 1.5};
  double dist = std::hypot(m.mean, m.variance - 1.0);
  for (int i = 0; i < 12; ++i) {
    m = hdc::selu_gaussian_moments(m.mean * 0.0, m.variance * 1.0, p);
    const double next = std::hypot(m.mean, m.variance - 1.0);
    require(next < dist, "iteration stopped contracting at step " +
                             std::to_string(i + 1) + " (" + num(next) +
                             " >= " + num(dist) + ")");
    dist = next;
  }
  require(dist < 0.05,
          "iterate ended " + num(dist) + " away from (0, 1)");
}

// ---- 3: BS stack normalization ---------------------------------------

std::pair<double, double> channel_stats(const TensorF& x, std::size_t c) {
  const auto& s = x.shape();
  const std::size_t n = s[0], hh = s[2], ww = s[3];
  const std::size_t plane = hh * ww;
  auto data = const_cast<TensorF&>(x).raw_data();
  double sum = 0, sq = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const float* base = data.data() + (b * s[1] + c) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      sum += base[i];
      sq += double(base[i]) * base[i];
    }
  }
  const double count = static_cast<double>(n * plane);
  const double mean = sum / count;
  return {mean, sq / count - mean * mean};
}

void check_bs_stack() {
  for (hdc::BlockOrder order :
       {hdc::BlockOrder::act_then_norm, hdc::BlockOrder::norm_then_act}) {
    hdc::RngStream rng(31);
    TensorF x = TensorF::normal({16, 8, 32, 32}, rng);
    for (int layer = 0; layer < 6; ++layer) {
      hdc::Conv2dSpec<float> spec;
      spec.weight =
          TensorF::normal({8, 8, 4, 4}, rng, 0.0, 1.0 / std::sqrt(128.0));
      spec.stride = 1;
      spec.padding = 1;
      hdc::BatchNormState<float> bn(8);
      x = hdc::bs_block(x, spec, bn, {}, order, true).detach();
      for (std::size_t c = 0; c < 8; ++c) {
        const auto [mean, var] = channel_stats(x, c);
        require(mean > -0.1 && mean < 0.1,
                "layer " + std::to_string(layer + 1) + " channel mean " +
                    num(mean) + " outside (-0.1, 0.1)");
        require(var > 0.9 && var < 1.1,
                "layer " + std::to_string(layer + 1) + " channel variance " +
                    num(var) + " outside (0.9, 1.1)");
      }
    }
  }

  // Constant input: batch variance is zero, the stack must stay finite.
  hdc::RngStream rng(32);
  TensorF x({4, 8, 16, 16}, 0.7f);
  for (int layer = 0; layer < 6; ++layer) {
    hdc::Conv2dSpec<float> spec;
    spec.weight =
        TensorF::normal({8, 8, 4, 4}, rng, 0.0, 1.0 / std::sqrt(128.0));
    spec.stride = 1;
    spec.padding = 1;
    hdc::BatchNormState<float> bn(8);
    x = hdc::bs_block(x, spec, bn, {}, hdc::BlockOrder::act_then_norm, true)
            .detach();
  }
  auto data = x.raw_data();
  for (float v : data) {
    require(std::isfinite(v), "constant input produced a non-finite value");
  }
}

// ---- 4: depth rule and telescope deepening ---------------------------

void check_depth_rule() {
  require(hdc::layer_count(32) == 4,
          "layer_count(32) == " + std::to_string(hdc::layer_count(32)));
  require(hdc::layer_count(256) == 7,
          "layer_count(256) == " + std::to_string(hdc::layer_count(256)));

  for (std::size_t size = 8; size <= 512; size *= 2) {
    hdc::NetworkConfig cfg;
    cfg.base_height = cfg.base_width = size;
    cfg.n_filters = 8;
    cfg.latent_dim = 16;
    hdc::RngStream rng(size);
    const auto gen = hdc::build_generator<float>(cfg, rng);
    const auto dis = hdc::build_discriminator<float>(cfg, rng);
    const std::size_t expect = hdc::layer_count(size);
    require(gen.blocks.size() == expect,
            "generator at " + std::to_string(size) + " has " +
                std::to_string(gen.blocks.size()) + " blocks, expected " +
                std::to_string(expect));
    require(dis.blocks.size() == expect,
            "discriminator at " + std::to_string(size) + " has " +
                std::to_string(dis.blocks.size()) + " blocks");
  }

  hdc::NetworkConfig base;
  base.base_height = base.base_width = 64;
  base.n_filters = 8;
  hdc::RngStream rng(9);
  const auto plain = hdc::build_generator<float>(base, rng);
  require(plain.blocks.size() == 5, "size-64 generator should be 5 deep");

  hdc::NetworkConfig tele = base;
  tele.zeta1 = tele.zeta2 = 2;
  const auto deep = hdc::build_generator<float>(tele, rng);
  require(deep.blocks.size() == 6,
          "telescope (2,2) on size 64 should deepen 5 to 6, got " +
              std::to_string(deep.blocks.size()));
  for (const auto& net : {plain, deep}) {
    for (const auto& block : net.blocks) {
      const auto& s = block.conv.weight.shape();
      require(s[2] == 4 && s[3] == 4, "kernel is not 4x4");
    }
  }
}

// ---- 5: toy discriminator --------------------------------------------

void check_toy_discriminator() {
  hdc::ToyDistribution p_data;
  hdc::ToyDistribution p_g;
  for (int i = 0; i < 8; ++i) {
    const double x = (static_cast<double>(i) - 3.5) / 3.5;
    p_data.support.push_back(x);
    p_g.support.push_back(x);
  }
  p_data.probabilities = {0.05, 0.05, 0.10, 0.125, 0.15, 0.20, 0.20, 0.125};
  p_g.probabilities = {0.20, 0.15, 0.15, 0.125, 0.10, 0.10, 0.10, 0.075};

  hdc::ToyRigConfig cfg;
  cfg.seed = 7;
  const std::vector<double> d =
      hdc::train_toy_discriminator(p_data, p_g, cfg, p_data.support);
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double target = hdc::optimal_discriminator(
        p_data.probabilities[i], p_g.probabilities[i]);
    worst = std::max(worst, std::abs(d[i] - target));
  }
  require(worst <= 0.05, "trained D is " + num(worst) +
                             " from the density ratio (limit 0.05)");

  const std::vector<double> eq =
      hdc::train_toy_discriminator(p_data, p_data, cfg, p_data.support);
  double worst_eq = 0;
  for (double v : eq) worst_eq = std::max(worst_eq, std::abs(v - 0.5));
  require(worst_eq <= 0.02, "equal densities give D off 0.5 by " +
                                num(worst_eq) + " (limit 0.02)");
}

// ---- 6: equilibrium losses -------------------------------------------

void check_equilibrium() {
  TensorD half({8}, std::vector<double>(8, 0.5));
  const double ln2 = std::log(2.0);
  const double d = hdc::d_loss(half, half).item();
  const double g = hdc::g_loss(half).item();
  require(std::abs(d - ln2) <= 1e-9,
          "d_loss at D = 1/2 is " + num(d) + ", not ln 2");
  require(std::abs(g - ln2) <= 1e-9,
          "g_loss at D = 1/2 is " + num(g) + ", not ln 2");
}

// ---- 7: metric oracles -----------------------------------------------

ssim_ref::Gray to_gray(const hdc::Image& img) {
  const hdc::Image lum = hdc::luminance(img);
  ssim_ref::Gray g;
  g.h = lum.height;
  g.w = lum.width;
  g.v.assign(lum.pixels.begin(), lum.pixels.end());
  return g;
}

void check_metric_oracles() {
  {
    hdc::GaussianSummary a{{0.0}, {1.0}};
    hdc::GaussianSummary b{{3.0}, {1.0}};
    const double fd = hdc::frechet_distance(a, b);
    require(std::abs(fd - 9.0) <= 1e-8,
            "1-D frechet (0,1) vs (3,1) gave " + num(fd));
    require(std::abs(hdc::frechet_distance(a, a)) <= 1e-10,
            "identical summaries give nonzero distance");
  }
  {
    const std::vector<double> mu1{0.2, -0.4, 1.0}, s1{0.5, 1.2, 2.0};
    const std::vector<double> mu2{-0.1, 0.3, 0.7}, s2{1.5, 0.8, 0.6};
    hdc::GaussianSummary a, b;
    a.mean = mu1;
    b.mean = mu2;
    a.covariance.assign(9, 0.0);
    b.covariance.assign(9, 0.0);
    double expect = 0;
    for (int i = 0; i < 3; ++i) {
      a.covariance[i * 3 + i] = s1[i];
      b.covariance[i * 3 + i] = s2[i];
      const double dm = mu1[i] - mu2[i];
      expect += dm * dm + s1[i] + s2[i] - 2.0 * std::sqrt(s1[i] * s2[i]);
    }
    const double fd = hdc::frechet_distance(a, b);
    require(std::abs(fd - expect) <= 1e-8,
            "diagonal frechet " + num(fd) + " != " + num(expect));
  }

  const hdc::Image a = testutil::pattern_image(3, 96, 96, 0.0);
  const hdc::Image b = testutil::pattern_image(3, 96, 96, 1.3);
  require(std::abs(hdc::ms_ssim(a, a) - 1.0) <= 1e-9,
          "ms_ssim(a, a) is not 1");
  require(std::abs(hdc::ms_ssim(a, b) - hdc::ms_ssim(b, a)) <= 1e-9,
          "ms_ssim is not symmetric");

  hdc::RngStream noise_rng(71);
  const hdc::Image p0 = testutil::pattern_image(1, 96, 96, 0.0);
  hdc::Image scaled = p0;
  for (float& v : scaled.pixels) v *= 0.8f;
  const hdc::Image rough = testutil::noise_image(1, 96, 96, noise_rng);
  hdc::Image mixed = p0;
  for (std::size_t i = 0; i < mixed.pixels.size(); ++i) {
    mixed.pixels[i] = 0.7f * p0.pixels[i] + 0.3f * rough.pixels[i];
  }
  const std::vector<double> weights = hdc::default_scale_weights();
  const std::pair<hdc::Image, hdc::Image> pairs[] = {
      {p0, scaled}, {p0, rough}, {p0, mixed}};
  for (const auto& [x, y] : pairs) {
    const double ours = hdc::ms_ssim(x, y);
    const double ref = ssim_ref::ms_ssim(to_gray(x), to_gray(y), weights);
    require(std::abs(ours - ref) <= 1e-6,
            "ms_ssim " + num(ours) + " disagrees with the reference " +
                num(ref));
  }
}

// ---- 8: protocol defaults --------------------------------------------

void check_protocol_defaults() {
  require(hdc::kMsssimProtocolPairs == 10000,
          "MS-SSIM protocol pair count is not 10000");
  require(hdc::kMsssimProtocolResize == 128,
          "MS-SSIM protocol resize is not 128");
  require(hdc::kFdProtocolResize == 64, "FD protocol resize is not 64");

  const std::string ms_help = run_cli_stdout({"eval-msssim", "--help"});
  require(ms_help.find("10000") != std::string::npos,
          "eval-msssim help does not advertise 10000 pairs");
  require(ms_help.find("128") != std::string::npos,
          "eval-msssim help does not advertise resize 128");
  const std::string fd_help = run_cli_stdout({"eval-fd", "--help"});
  require(fd_help.find("64") != std::string::npos,
          "eval-fd help does not advertise resize 64");

  std::vector<hdc::Image> imgs{testutil::pattern_image(3, 40, 40, 0.0),
                               testutil::pattern_image(3, 40, 40, 2.0)};
  hdc::RngStream rng(5);
  const hdc::MetricReport rep = hdc::msssim_protocol(imgs, 3, 128, rng);
  require(rep.metric == "ms_ssim", "protocol metric label wrong");
  require(rep.pairs == 3 && rep.resize == 128,
          "protocol report does not echo pairs/resize");
  require(rep.value >= 0.0 && rep.value <= 1.0,
          "protocol value " + num(rep.value) + " outside [0, 1]");
}

// ---- 9: end-to-end smoke ---------------------------------------------

hdc::Image synth_image(std::size_t cls, hdc::RngStream& rng) {
  hdc::Image img(3, 32, 32);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        double base;
        if (cls == 0) {
          base = ((x / 4) % 2 == 0) ? 0.8 : 0.2;
        } else {
          const double dx = double(x) - 16.0, dy = double(y) - 16.0;
          base = std::sqrt(dx * dx + dy * dy) < 9.0 ? 0.85 : 0.15;
        }
        const double v = base + 0.1 * (rng.uniform01() - 0.5);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

void check_smoke() {
  testutil::TempDir tmp;
  const fs::path raw = tmp / "raw";
  fs::create_directories(raw);
  hdc::RngStream img_rng(2024);
  std::ostringstream attrs;
  attrs << "file,gender\n";
  char name[32];
  for (std::size_t i = 0; i < 512; ++i) {
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    hdc::save_png(synth_image(i % 2, img_rng), raw / name);
    attrs << name << ',' << (i % 2 ? "female" : "male") << '\n';
  }
  testutil::write_text(raw / "attributes.csv", attrs.str());

  const fs::path data = tmp / "data";
  require(run_cli_quiet({"dataset-build", "--in", raw.string(), "--out",
                         data.string(), "--size", "32", "--no-mirror"}) == 0,
          "dataset build failed");

  const hdc::DatasetManifest manifest =
      hdc::read_manifest(data / "manifest.csv");
  require(manifest.records.size() == 512, "expected 512 records");
  const hdc::DatasetLoader loader(manifest, data);

  hdc::NetworkConfig nc;
  nc.base_height = nc.base_width = 32;
  nc.latent_dim = 64;
  nc.n_filters = 16;
  hdc::TrainConfig tc;
  tc.batch_size = 32;
  tc.seed = 2026;

  auto run_steps = [&](hdc::TrainState<float>& st, hdc::BatchStream& stream,
                       std::uint64_t until) {
    while (st.step < until) {
      const TensorF real = loader.load_batch(stream.next_batch());
      hdc::train_step(st, real);
    }
  };

  hdc::TrainState<float> straight = hdc::make_train_state<float>(nc, tc);
  hdc::BatchStream stream_a(manifest, "", tc.batch_size,
                            hdc::RngStream::derive(tc.seed, "batches"));
  run_steps(straight, stream_a, 150);
  const fs::path mid = tmp / "mid.ckpt";
  hdc::save_checkpoint(straight, mid);
  run_steps(straight, stream_a, 300);
  for (const hdc::LossEntry& e : straight.loss_history) {
    require(std::isfinite(e.d_loss) && std::isfinite(e.g_loss),
            "non-finite loss at step " + std::to_string(e.step));
  }
  const fs::path final_a = tmp / "final_a.ckpt";
  hdc::save_checkpoint(straight, final_a);

  hdc::TrainState<float> resumed = hdc::load_checkpoint<float>(mid);
  hdc::BatchStream stream_b(manifest, "", resumed.config.batch_size,
                            hdc::RngStream::derive(resumed.config.seed,
                                                   "batches"));
  for (std::uint64_t i = 0; i < resumed.step; ++i) stream_b.next_batch();
  run_steps(resumed, stream_b, 300);
  const fs::path final_b = tmp / "final_b.ckpt";
  hdc::save_checkpoint(resumed, final_b);
  require(testutil::read_file(final_a) == testutil::read_file(final_b),
          "checkpoint round-trip diverged from the uninterrupted run");

  hdc::RngStream gen_rng = hdc::RngStream::derive(2026, "samples");
  const TensorF z = TensorF::normal({100, nc.latent_dim}, gen_rng);
  const std::vector<hdc::Image> samples =
      hdc::batch_to_images(straight.generator.forward(z, false));
  hdc::RngStream pair_rng = hdc::RngStream::derive(2026, "pairs");
  const hdc::MetricReport rep =
      hdc::msssim_protocol(samples, 200, 128, pair_rng);
  require(rep.value < 0.98, "generated pairwise MS-SSIM " + num(rep.value) +
                                " has not left the collapse value 1.0");
}

// ---- 10: seeded reruns -----------------------------------------------

void check_determinism() {
  testutil::TempDir tmp;
  const fs::path raw = tmp / "raw";
  fs::create_directories(raw);
  hdc::RngStream rng(77);
  std::ostringstream attrs;
  attrs << "file,gender\n";
  char name[32];
  for (std::size_t i = 0; i < 6; ++i) {
    std::snprintf(name, sizeof name, "img_%03zu.png", i);
    hdc::save_png(testutil::quantized_image(3, 8, 8, rng), raw / name);
    attrs << name << ',' << (i % 2 ? "male" : "female") << '\n';
  }
  testutil::write_text(raw / "attributes.csv", attrs.str());

  auto same = [&](const fs::path& x, const fs::path& y,
                  const std::string& what) {
    require(testutil::read_file(x) == testutil::read_file(y),
            what + " differs between identical seeded runs");
  };

  const fs::path d1 = tmp / "d1", d2 = tmp / "d2";
  for (const fs::path& d : {d1, d2}) {
    require(run_cli_quiet({"dataset-build", "--in", raw.string(), "--out",
                           d.string(), "--size", "8"}) == 0,
            "dataset-build failed");
  }
  same(d1 / "manifest.csv", d2 / "manifest.csv", "manifest.csv");
  same(d1 / "stats.json", d2 / "stats.json", "stats.json");

  const fs::path t1 = tmp / "t1", t2 = tmp / "t2";
  for (const fs::path& t : {t1, t2}) {
    require(run_cli_quiet({"train", "--data", (d1 / "manifest.csv").string(),
                           "--out", t.string(), "--size", "8", "--latent",
                           "8", "--filters", "4", "--batch", "4", "--epochs",
                           "1", "--seed", "3"}) == 0,
            "train failed");
  }
  same(t1 / "final.ckpt", t2 / "final.ckpt", "final.ckpt");
  same(t1 / "loss.csv", t2 / "loss.csv", "loss.csv");
  same(t1 / "samples" / "epoch_1.png", t2 / "samples" / "epoch_1.png",
       "sample grid");

  const fs::path g1 = tmp / "g1", g2 = tmp / "g2";
  for (const fs::path& g : {g1, g2}) {
    require(run_cli_quiet({"generate", "--checkpoint",
                           (t1 / "final.ckpt").string(), "--out", g.string(),
                           "--count", "4", "--cols", "2", "--seed", "9"}) ==
                0,
            "generate failed");
  }
  same(g1 / "grid.png", g2 / "grid.png", "grid.png");

  const fs::path imgs = tmp / "imgs";
  fs::create_directories(imgs);
  hdc::save_png(testutil::pattern_image(3, 40, 40, 0.0), imgs / "a.png");
  hdc::save_png(testutil::pattern_image(3, 40, 40, 2.0), imgs / "b.png");
  for (const char* stem : {"m1", "m2"}) {
    require(run_cli_quiet({"eval-msssim", "--images", imgs.string(),
                           "--pairs", "2", "--seed", "4", "--out",
                           (tmp / stem).string()}) == 0,
            "eval-msssim failed");
  }
  same(tmp / "m1.json", tmp / "m2.json", "msssim json");
  same(tmp / "m1.csv", tmp / "m2.csv", "msssim csv");

  for (const char* stem : {"f1", "f2"}) {
    require(run_cli_quiet({"eval-fd", "--real", raw.string(), "--fake",
                           imgs.string(), "--resize", "8", "--extractor",
                           "pixels:4", "--out", (tmp / stem).string()}) == 0,
            "eval-fd failed");
  }
  same(tmp / "f1.json", tmp / "f2.json", "fd json");

  for (const char* stem : {"n1.csv", "n2.csv"}) {
    require(run_cli_quiet({"nn", "--query", (raw / "img_000.png").string(),
                           "--corpus", raw.string(), "--k", "3", "--out",
                           (tmp / stem).string()}) == 0,
            "nn failed");
  }
  same(tmp / "n1.csv", tmp / "n2.csv", "nn table");

  for (const char* stem : {"mo1.csv", "mo2.csv"}) {
    require(run_cli_quiet({"moments-demo", "--iters", "3", "--samples",
                           "20000", "--seed", "5", "--out",
                           (tmp / stem).string()}) == 0,
            "moments-demo failed");
  }
  same(tmp / "mo1.csv", tmp / "mo2.csv", "moments table");

  testutil::write_text(tmp / "loss.csv",
                       "step,epoch,d_loss,g_loss\n1,1,0.9,0.8\n2,1,0.7,0.75\n");
  for (const char* stem : {"c1", "c2"}) {
    require(run_cli_quiet({"emit-curves", "--in",
                           (tmp / "loss.csv").string(), "--out",
                           (tmp / stem).string()}) == 0,
            "emit-curves failed");
  }
  same(tmp / "c1.svg", tmp / "c2.svg", "curves svg");
  same(tmp / "c1_tidy.csv", tmp / "c2_tidy.csv", "tidy csv");
  same(tmp / "c1_fit.json", tmp / "c2_fit.json", "fit json");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void()> body;
  };
  const Criterion criteria[] = {
      {"gradient checks for every op and both losses", check_gradients},
      {"selu moment map holds its (0,1) fixed point", check_fixed_point},
      {"six stacked BS blocks keep unit channel statistics", check_bs_stack},
      {"depth rule and telescope deepening", check_depth_rule},
      {"toy discriminator reaches the density ratio", check_toy_discriminator},
      {"equilibrium losses equal ln 2", check_equilibrium},
      {"metric oracles (frechet closed forms, ms-ssim reference)",
       check_metric_oracles},
      {"evaluation protocol defaults (10000 pairs, 128 / 64 resize)",
       check_protocol_defaults},
      {"end-to-end training smoke with checkpoint round-trip", check_smoke},
      {"seeded reruns produce byte-identical outputs", check_determinism},
  };

  int failures = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.body();
    } catch (const Failure& f) {
      error = f.what;
    } catch (const std::exception& e) {
      error = std::string("unexpected exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start)
            .count();
    if (error.empty()) {
      std::printf("[PASS] %2d/10 %s (%.1fs)\n", index, c.name, secs);
    } else {
      std::printf("[FAIL] %2d/10 %s: %s (%.1fs)\n", index, c.name,
                  error.c_str(), secs);
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures != 0) {
    std::printf("%d of 10 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
