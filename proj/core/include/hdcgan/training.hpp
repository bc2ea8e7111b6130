#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hdcgan/model.hpp"
#include "hdcgan/tensor.hpp"

namespace hdc {

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t batch_size = 32;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double noise_amplitude = 0.1;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // steps between checkpoints; 0 = end only
  bool noise_on_d = true;
  bool noise_on_g = true;
  BlockOrder block_order = BlockOrder::act_then_norm;
  Interpolation interpolation = Interpolation::bilinear;

  void validate() const;
};

/// -1/2 mean(log D(x)) - 1/2 mean(log(1 - D(G(z)))). Probabilities are
/// clamped to [1e-7, 1-1e-7] inside the logs, so the loss stays finite
/// for saturated discriminator outputs.
template <typename T>
Tensor<T> d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake);

/// Non-saturating generator objective -mean(log D(G(z))); shares its
/// fixed points with the minimax form but keeps early gradients alive.
template <typename T>
Tensor<T> g_loss(const Tensor<T>& d_fake);

/// x + sigma * eps with eps ~ N(0,1) elementwise from the given stream.
/// sigma == 0 returns x unchanged.
template <typename T>
Tensor<T> inject_noise(const Tensor<T>& x, double sigma, RngStream& rng);

/// One Adam update with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// t is the 1-based step count. Checked mode rejects non-finite grads.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, std::uint64_t t, double lr, double beta1,
               double beta2, double eps);

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::vector<Tensor<T>> params, const TrainConfig& cfg);

  /// Applies one update from the populated grads and advances t.
  void step();
  void zero_grad();

  std::uint64_t t() const { return t_; }
  void set_t(std::uint64_t t) { t_ = t; }
  std::size_t size() const { return params_.size(); }
  std::span<T> moment1(std::size_t i) { return m_[i]; }
  std::span<T> moment2(std::size_t i) { return v_[i]; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  double lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  std::uint64_t t_ = 0;
};

struct LossEntry {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double d_loss = 0;
  double g_loss = 0;
};

/// CSV `step,epoch,d_loss,g_loss`, one row per entry.
void write_loss_csv(const std::vector<LossEntry>& history,
                    const std::filesystem::path& path);

template <typename T>
struct TrainState {
  Network<T> generator;
  Network<T> discriminator;
  AdamOptimizer<T> opt_g;
  AdamOptimizer<T> opt_d;
  TrainConfig config;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  RngStream latent_rng{0};
  RngStream noise_d_rng{0};
  RngStream noise_g_rng{0};
  std::vector<LossEntry> loss_history;
};

/// Builds both networks (init substreams derived from config.seed),
/// fresh optimizers, and the three named noise streams.
template <typename T>
TrainState<T> make_train_state(const NetworkConfig& ncfg,
                               const TrainConfig& tcfg);

/// One discriminator update on {real, G(z)} followed by one generator
/// update on a fresh z, with the configured noise injection on both
/// players' inputs. Returns (d_loss, g_loss) and appends to the loss
/// history. A non-finite loss aborts, naming the offending network.
template <typename T>
std::pair<double, double> train_step(TrainState<T>& state,
                                     const Tensor<T>& real_batch);

/// Binary checkpoint, little-endian throughout. Layout: magic "HDCK",
/// version, NetworkConfig, TrainConfig, step counters, RNG states,
/// then named tensor records (parameters, running stats, Adam moments,
/// loss history). Round-trip is bit-exact: the restored state replays
/// the identical training trajectory. SELU coefficients are the fixed
/// defaults and are not serialized.
template <typename T>
void save_checkpoint(const TrainState<T>& state,
                     const std::filesystem::path& path);

/// Rejects a bad magic, version mismatch, truncation, or any tensor
/// whose shape disagrees with the embedded NetworkConfig; never returns
/// partial state.
template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& path);

// ---- toy rig ----

/// Closed-form densities for the optimal-discriminator experiments.
struct ToyDistribution {
  enum class Kind { discrete_table, gaussian_mixture_1d };
  Kind kind = Kind::discrete_table;

  // discrete_table: point masses at support[i] with probabilities[i].
  std::vector<double> support;
  std::vector<double> probabilities;

  // gaussian_mixture_1d: component (mean, variance, weight) triples.
  std::vector<double> means;
  std::vector<double> variances;
  std::vector<double> weights;

  void validate() const;
  double sample(RngStream& rng) const;
  /// Probability mass (discrete) or density (mixture) at x.
  double pdf(double x) const;
};

/// Density ratio p_data / (p_data + p_g). Both zero is an error.
double optimal_discriminator(double p_data_at_x, double p_g_at_x);

struct ToyRigConfig {
  std::size_t hidden = 32;
  std::size_t steps = 2000;
  std::size_t batch = 1024;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains a small MLP discriminator (1 -> hidden -> hidden -> 1,
/// tanh/sigmoid) against a frozen generator: real samples from p_data,
/// fake from p_g, the d_loss objective, Adam. Returns D evaluated at
/// eval_points, for comparison with optimal_discriminator.
std::vector<double> train_toy_discriminator(const ToyDistribution& p_data,
                                            const ToyDistribution& p_g,
                                            const ToyRigConfig& cfg,
                                            std::span<const double> eval_points);

}  // namespace hdc
