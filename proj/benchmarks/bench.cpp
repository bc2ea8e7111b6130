#include <benchmark/benchmark.h>

#include "hdcgan/dataset.hpp"
#include "hdcgan/metrics.hpp"
#include "hdcgan/model.hpp"
#include "hdcgan/tensor.hpp"
#include "hdcgan/training.hpp"

namespace {

using hdc::TensorF;

void conv2d_forward(benchmark::State& state) {
  hdc::RngStream rng(1);
  const TensorF x = TensorF::normal({8, 16, 16, 16}, rng);
  const TensorF k = TensorF::normal({32, 16, 4, 4}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hdc::conv2d(x, k, 2, 1));
  }
}
BENCHMARK(conv2d_forward);

void conv2d_backward(benchmark::State& state) {
  hdc::RngStream rng(2);
  TensorF x = TensorF::normal({8, 16, 16, 16}, rng);
  TensorF k = TensorF::normal({32, 16, 4, 4}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  for (auto _ : state) {
    TensorF loss = hdc::mean(hdc::conv2d(x, k, 2, 1));
    x.zero_grad();
    k.zero_grad();
    loss.backward();
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(conv2d_backward);

void generator_forward(benchmark::State& state) {
  hdc::NetworkConfig cfg;
  cfg.base_height = cfg.base_width = 32;
  cfg.latent_dim = 64;
  cfg.n_filters = 16;
  hdc::RngStream rng(3);
  auto gen = hdc::build_generator<float>(cfg, rng);
  const TensorF z = TensorF::normal({16, cfg.latent_dim}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.forward(z, false));
  }
}
BENCHMARK(generator_forward);

void full_train_step(benchmark::State& state) {
  hdc::NetworkConfig nc;
  nc.base_height = nc.base_width = 32;
  nc.latent_dim = 64;
  nc.n_filters = 16;
  hdc::TrainConfig tc;
  tc.batch_size = 16;
  auto st = hdc::make_train_state<float>(nc, tc);
  hdc::RngStream rng(4);
  const TensorF real = TensorF::normal({16, 3, 32, 32}, rng, 0.0, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hdc::train_step(st, real));
  }
}
BENCHMARK(full_train_step);

void ms_ssim_128(benchmark::State& state) {
  hdc::Image a(3, 128, 128);
  hdc::Image b(3, 128, 128);
  hdc::RngStream rng(5);
  for (float& p : a.pixels) p = static_cast<float>(rng.uniform01());
  for (float& p : b.pixels) p = static_cast<float>(rng.uniform01());
  for (auto _ : state) {
    benchmark::DoNotOptimize(hdc::ms_ssim(a, b));
  }
}
BENCHMARK(ms_ssim_128);

}  // namespace

BENCHMARK_MAIN();
