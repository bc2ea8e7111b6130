#include "hdcgan/training.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

namespace hdc {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw Error("learning_rate must be positive");
  if (batch_size < 2) throw Error("batch_size must be at least 2");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw Error("adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0)) throw Error("adam epsilon must be positive");
  if (noise_amplitude < 0) throw Error("noise_amplitude must be >= 0");
}

// ---- losses ----

namespace {
constexpr double kProbEps = 1e-7;
}

template <typename T>
Tensor<T> d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  auto cr = clamp(d_real, kProbEps, 1.0 - kProbEps);
  auto cf = clamp(d_fake, kProbEps, 1.0 - kProbEps);
  auto one = Tensor<T>::scalar(T(1));
  return scale(mean(log(cr)) + mean(log(one - cf)), -0.5);
}

template <typename T>
Tensor<T> g_loss(const Tensor<T>& d_fake) {
  auto cf = clamp(d_fake, kProbEps, 1.0 - kProbEps);
  return neg(mean(log(cf)));
}

template Tensor<float> d_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> d_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> g_loss(const Tensor<float>&);
template Tensor<double> g_loss(const Tensor<double>&);

template <typename T>
Tensor<T> inject_noise(const Tensor<T>& x, double sigma, RngStream& rng) {
  if (sigma < 0) throw Error("inject_noise: sigma must be >= 0");
  if (sigma == 0) return x;
  Tensor<T> eps = Tensor<T>::normal(x.shape(), rng, 0.0, sigma);
  return x + eps;
}

template Tensor<float> inject_noise(const Tensor<float>&, double, RngStream&);
template Tensor<double> inject_noise(const Tensor<double>&, double,
                                     RngStream&);

// ---- adam ----

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, std::uint64_t t, double lr, double beta1,
               double beta2, double eps) {
  if (param.size() != grad.size() || param.size() != m.size() ||
      param.size() != v.size()) {
    throw Error("adam_step: parameter/gradient/moment sizes disagree");
  }
  if (t < 1) throw Error("adam_step: step count must be >= 1");
  if (checked_mode()) {
    for (T g : grad) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw Error("adam_step: non-finite gradient");
      }
    }
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double mi = beta1 * m[i] + (1.0 - beta1) * g;
    const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(param[i] -
                              lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
  }
}

template void adam_step(std::span<float>, std::span<const float>,
                        std::span<float>, std::span<float>, std::uint64_t,
                        double, double, double, double);
template void adam_step(std::span<double>, std::span<const double>,
                        std::span<double>, std::span<double>, std::uint64_t,
                        double, double, double, double);

template <typename T>
AdamOptimizer<T>::AdamOptimizer(std::vector<Tensor<T>> params,
                                const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor<T>& p : params_) {
    m_.emplace_back(p.size(), T(0));
    v_.emplace_back(p.size(), T(0));
  }
}

template <typename T>
void AdamOptimizer<T>::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step<T>(params_[i].raw_data(), params_[i].grad(), m_[i], v_[i], t_,
                 lr_, beta1_, beta2_, eps_);
  }
}

template <typename T>
void AdamOptimizer<T>::zero_grad() {
  for (Tensor<T>& p : params_) p.zero_grad();
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

// ---- loop ----

template <typename T>
TrainState<T> make_train_state(const NetworkConfig& ncfg,
                               const TrainConfig& tcfg) {
  ncfg.validate();
  tcfg.validate();
  TrainState<T> st;
  st.config = tcfg;
  RngStream init_g = RngStream::derive(tcfg.seed, "init/G");
  RngStream init_d = RngStream::derive(tcfg.seed, "init/D");
  st.generator = build_generator<T>(ncfg, init_g, tcfg.block_order);
  st.discriminator = build_discriminator<T>(ncfg, init_d, tcfg.block_order);
  st.opt_g = AdamOptimizer<T>(st.generator.parameters(), tcfg);
  st.opt_d = AdamOptimizer<T>(st.discriminator.parameters(), tcfg);
  st.latent_rng = RngStream::derive(tcfg.seed, "latent");
  st.noise_d_rng = RngStream::derive(tcfg.seed, "noise/D");
  st.noise_g_rng = RngStream::derive(tcfg.seed, "noise/G");
  return st;
}

template TrainState<float> make_train_state(const NetworkConfig&,
                                            const TrainConfig&);
template TrainState<double> make_train_state(const NetworkConfig&,
                                             const TrainConfig&);

template <typename T>
std::pair<double, double> train_step(TrainState<T>& state,
                                     const Tensor<T>& real_batch) {
  const NetworkConfig& ncfg = state.generator.config;
  const std::size_t S = ncfg.effective_size();
  if (real_batch.rank() != 4 || real_batch.shape()[1] != ncfg.channels ||
      real_batch.shape()[2] != S || real_batch.shape()[3] != S) {
    throw Error("train_step: real batch must be [B," +
                std::to_string(ncfg.channels) + "," + std::to_string(S) + "," +
                std::to_string(S) + "], got " +
                shape_str(real_batch.shape()));
  }
  const std::size_t B = real_batch.shape()[0];
  const double sigma = state.config.noise_amplitude;

  // Discriminator update. The fake batch is detached: its production
  // consumed generator parameters, but no gradient flows back.
  Tensor<T> z1 = Tensor<T>::normal(Shape{B, ncfg.latent_dim},
                                   state.latent_rng);
  if (state.config.noise_on_g) {
    z1 = inject_noise(z1, sigma, state.noise_g_rng);
  }
  Tensor<T> fake = state.generator.forward(z1, true).detach();
  Tensor<T> real_in = state.config.noise_on_d
                          ? inject_noise(real_batch, sigma, state.noise_d_rng)
                          : real_batch;
  Tensor<T> fake_in = state.config.noise_on_d
                          ? inject_noise(fake, sigma, state.noise_d_rng)
                          : fake;
  Tensor<T> dl = d_loss(state.discriminator.forward(real_in, true),
                        state.discriminator.forward(fake_in, true));
  const double dl_value = static_cast<double>(dl.item());
  if (!std::isfinite(dl_value)) {
    throw Error("train_step: non-finite loss in discriminator at step " +
                std::to_string(state.step + 1));
  }
  state.opt_d.zero_grad();
  dl.backward();
  state.opt_d.step();

  // Generator update on a fresh latent batch, discriminator frozen.
  Tensor<T> z2 = Tensor<T>::normal(Shape{B, ncfg.latent_dim},
                                   state.latent_rng);
  if (state.config.noise_on_g) {
    z2 = inject_noise(z2, sigma, state.noise_g_rng);
  }
  state.discriminator.set_parameters_requires_grad(false);
  double gl_value;
  try {
    Tensor<T> fake2 = state.generator.forward(z2, true);
    Tensor<T> fake2_in =
        state.config.noise_on_d
            ? inject_noise(fake2, sigma, state.noise_d_rng)
            : fake2;
    Tensor<T> gl = g_loss(state.discriminator.forward(fake2_in, true));
    gl_value = static_cast<double>(gl.item());
    if (!std::isfinite(gl_value)) {
      throw Error("train_step: non-finite loss in generator at step " +
                  std::to_string(state.step + 1));
    }
    state.opt_g.zero_grad();
    gl.backward();
    state.opt_g.step();
  } catch (...) {
    state.discriminator.set_parameters_requires_grad(true);
    throw;
  }
  state.discriminator.set_parameters_requires_grad(true);

  ++state.step;
  state.loss_history.push_back({state.step, state.epoch, dl_value, gl_value});
  return {dl_value, gl_value};
}

template std::pair<double, double> train_step(TrainState<float>&,
                                              const Tensor<float>&);
template std::pair<double, double> train_step(TrainState<double>&,
                                              const Tensor<double>&);

void write_loss_csv(const std::vector<LossEntry>& history,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,epoch,d_loss,g_loss\n";
  char line[128];
  for (const LossEntry& e : history) {
    std::snprintf(line, sizeof line, "%" PRIu64 ",%" PRIu64 ",%.9g,%.9g\n",
                  e.step, e.epoch, e.d_loss, e.g_loss);
    out << line;
  }
  if (!out) throw Error("short write to " + path.string());
}

// ---- checkpoint ----

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'H', 'D', 'C', 'K'};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

struct Writer {
  std::vector<std::uint8_t> buf;

  void u8(std::uint8_t v) { buf.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xFF);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xFF);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void scalar(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void scalar(double v) { f64(v); }

  template <typename T>
  void record(const std::string& name, const Shape& shape,
              std::span<const T> data) {
    str(name);
    u8(dtype_code<T>());
    u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) u64(e);
    for (T v : data) scalar(v);
  }
};

struct Reader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw Error("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf[pos++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[pos++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  float scalar_f32() { return std::bit_cast<float>(u32()); }
};

template <typename T>
T read_scalar(Reader& r) {
  if constexpr (std::is_same_v<T, float>) {
    return r.scalar_f32();
  } else {
    return static_cast<T>(r.f64());
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> prefixed_tensors(
    Network<T>& net, const std::string& prefix) {
  auto named = net.named_tensors();
  for (auto& [name, t] : named) name = prefix + name;
  return named;
}

bool is_parameter_record(const std::string& name) {
  return !name.ends_with("running_mean") && !name.ends_with("running_var");
}

template <typename T>
std::vector<std::string> parameter_names(Network<T>& net,
                                         const std::string& prefix) {
  std::vector<std::string> out;
  for (auto& [name, t] : net.named_tensors()) {
    if (is_parameter_record(name)) out.push_back(prefix + name);
  }
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const TrainState<T>& state,
                     const std::filesystem::path& path) {
  TrainState<T>& st = const_cast<TrainState<T>&>(state);
  Writer w;
  w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);

  const NetworkConfig& nc = st.generator.config;
  w.u32(static_cast<std::uint32_t>(nc.base_height));
  w.u32(static_cast<std::uint32_t>(nc.base_width));
  w.u32(static_cast<std::uint32_t>(nc.zeta1));
  w.u32(static_cast<std::uint32_t>(nc.zeta2));
  w.u32(static_cast<std::uint32_t>(nc.latent_dim));
  w.u32(static_cast<std::uint32_t>(nc.n_filters));
  w.u32(static_cast<std::uint32_t>(nc.channels));
  w.u32(static_cast<std::uint32_t>(layer_count(nc.effective_size())));

  const TrainConfig& tc = st.config;
  w.f64(tc.learning_rate);
  w.u32(static_cast<std::uint32_t>(tc.batch_size));
  w.f64(tc.beta1);
  w.f64(tc.beta2);
  w.f64(tc.adam_eps);
  w.f64(tc.noise_amplitude);
  w.u32(static_cast<std::uint32_t>(tc.epochs));
  w.u64(tc.seed);
  w.u32(static_cast<std::uint32_t>(tc.checkpoint_every));
  w.u8(tc.noise_on_d ? 1 : 0);
  w.u8(tc.noise_on_g ? 1 : 0);
  w.u8(tc.block_order == BlockOrder::act_then_norm ? 0 : 1);
  w.u8(tc.interpolation == Interpolation::bilinear ? 0 : 1);

  w.u64(st.epoch);
  w.u64(st.step);
  w.u64(st.opt_g.t());
  w.u64(st.opt_d.t());
  w.u32(RngStream::kAlgorithm);
  for (const RngStream* rng :
       {&st.latent_rng, &st.noise_d_rng, &st.noise_g_rng}) {
    w.u64(rng->seed());
    w.u64(rng->counter());
  }

  auto g_named = prefixed_tensors(st.generator, "g.");
  auto d_named = prefixed_tensors(st.discriminator, "d.");
  auto g_params = parameter_names(st.generator, "");
  auto d_params = parameter_names(st.discriminator, "");
  w.u64(g_named.size() + d_named.size() +
        2 * (g_params.size() + d_params.size()) + 1);

  for (auto& [name, t] : g_named) w.record<T>(name, t.shape(), t.data());
  for (auto& [name, t] : d_named) w.record<T>(name, t.shape(), t.data());
  auto write_moments = [&](AdamOptimizer<T>& opt,
                           const std::vector<std::string>& names,
                           std::vector<Tensor<T>> params,
                           const std::string& prefix) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      w.record<T>(prefix + ".m." + names[i], params[i].shape(),
                  opt.moment1(i));
      w.record<T>(prefix + ".v." + names[i], params[i].shape(),
                  opt.moment2(i));
    }
  };
  write_moments(st.opt_g, g_params, st.generator.parameters(), "opt_g");
  write_moments(st.opt_d, d_params, st.discriminator.parameters(), "opt_d");

  w.str("loss_history");
  w.u8(1);  // f64
  w.u32(2);
  w.u64(st.loss_history.size());
  w.u64(4);
  for (const LossEntry& e : st.loss_history) {
    w.f64(static_cast<double>(e.step));
    w.f64(static_cast<double>(e.epoch));
    w.f64(e.d_loss);
    w.f64(e.g_loss);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw Error("short write to " + path.string());
}

template void save_checkpoint(const TrainState<float>&,
                              const std::filesystem::path&);
template void save_checkpoint(const TrainState<double>&,
                              const std::filesystem::path&);

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{bytes, 0};

  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error("bad checkpoint magic in " + path.string());
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }

  NetworkConfig nc;
  nc.base_height = r.u32();
  nc.base_width = r.u32();
  nc.zeta1 = r.u32();
  nc.zeta2 = r.u32();
  nc.latent_dim = r.u32();
  nc.n_filters = r.u32();
  nc.channels = r.u32();
  const std::uint32_t stored_layers = r.u32();
  nc.validate();
  if (stored_layers != layer_count(nc.effective_size())) {
    throw Error("checkpoint layer count disagrees with its config");
  }

  TrainConfig tc;
  tc.learning_rate = r.f64();
  tc.batch_size = r.u32();
  tc.beta1 = r.f64();
  tc.beta2 = r.f64();
  tc.adam_eps = r.f64();
  tc.noise_amplitude = r.f64();
  tc.epochs = r.u32();
  tc.seed = r.u64();
  tc.checkpoint_every = r.u32();
  tc.noise_on_d = r.u8() != 0;
  tc.noise_on_g = r.u8() != 0;
  tc.block_order = r.u8() == 0 ? BlockOrder::act_then_norm
                               : BlockOrder::norm_then_act;
  tc.interpolation =
      r.u8() == 0 ? Interpolation::bilinear : Interpolation::nearest;

  TrainState<T> st = make_train_state<T>(nc, tc);
  st.epoch = r.u64();
  st.step = r.u64();
  st.opt_g.set_t(r.u64());
  st.opt_d.set_t(r.u64());
  const std::uint32_t algo = r.u32();
  if (algo != RngStream::kAlgorithm) {
    throw Error("unknown rng algorithm " + std::to_string(algo));
  }
  for (RngStream* rng : {&st.latent_rng, &st.noise_d_rng, &st.noise_g_rng}) {
    const std::uint64_t seed = r.u64();
    const std::uint64_t counter = r.u64();
    *rng = RngStream(seed, counter);
  }

  struct Slot {
    Shape shape;
    T* dst = nullptr;
    bool filled = false;
  };
  std::map<std::string, Slot> slots;
  auto add_slot = [&](const std::string& name, Tensor<T>& t) {
    slots[name] = Slot{t.shape(), t.raw_data().data(), false};
  };
  for (auto& [name, t] : prefixed_tensors(st.generator, "g.")) {
    add_slot(name, t);
  }
  for (auto& [name, t] : prefixed_tensors(st.discriminator, "d.")) {
    add_slot(name, t);
  }
  auto add_moments = [&](AdamOptimizer<T>& opt, Network<T>& net,
                         const std::string& prefix) {
    auto names = parameter_names(net, "");
    auto params = net.parameters();
    for (std::size_t i = 0; i < names.size(); ++i) {
      slots[prefix + ".m." + names[i]] =
          Slot{params[i].shape(), opt.moment1(i).data(), false};
      slots[prefix + ".v." + names[i]] =
          Slot{params[i].shape(), opt.moment2(i).data(), false};
    }
  };
  add_moments(st.opt_g, st.generator, "opt_g");
  add_moments(st.opt_d, st.discriminator, "opt_d");

  const std::uint64_t entries = r.u64();
  bool got_history = false;
  for (std::uint64_t e = 0; e < entries; ++e) {
    const std::string name = r.str();
    const std::uint8_t dtype = r.u8();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = r.u64();
      count *= shape[d];
    }
    if (name == "loss_history") {
      if (dtype != 1 || rank != 2 || shape[1] != 4) {
        throw Error("malformed loss history record");
      }
      st.loss_history.resize(shape[0]);
      for (LossEntry& le : st.loss_history) {
        le.step = static_cast<std::uint64_t>(r.f64());
        le.epoch = static_cast<std::uint64_t>(r.f64());
        le.d_loss = r.f64();
        le.g_loss = r.f64();
      }
      got_history = true;
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw Error("unexpected checkpoint record '" + name + "'");
    }
    Slot& slot = it->second;
    if (slot.filled) throw Error("duplicate checkpoint record '" + name + "'");
    if (dtype != dtype_code<T>()) {
      throw Error("dtype mismatch in record '" + name + "'");
    }
    if (shape != slot.shape) {
      throw Error("record '" + name + "' has shape " + shape_str(shape) +
                  ", config requires " + shape_str(slot.shape));
    }
    for (std::size_t i = 0; i < count; ++i) {
      slot.dst[i] = read_scalar<T>(r);
    }
    slot.filled = true;
  }
  for (const auto& [name, slot] : slots) {
    if (!slot.filled) throw Error("missing checkpoint record '" + name + "'");
  }
  if (!got_history) throw Error("missing checkpoint record 'loss_history'");
  if (r.pos != bytes.size()) {
    throw Error("trailing bytes after checkpoint payload");
  }
  return st;
}

template TrainState<float> load_checkpoint(const std::filesystem::path&);
template TrainState<double> load_checkpoint(const std::filesystem::path&);

// ---- toy rig ----

void ToyDistribution::validate() const {
  auto check_probs = [](const std::vector<double>& p, const char* what) {
    if (p.empty()) throw Error(std::string("toy distribution: empty ") + what);
    double sum = 0;
    for (double v : p) {
      if (v < 0) throw Error(std::string("toy distribution: negative ") + what);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw Error(std::string("toy distribution: ") + what +
                  " must sum to 1");
    }
  };
  if (kind == Kind::discrete_table) {
    if (support.size() != probabilities.size()) {
      throw Error("toy distribution: support/probability size mismatch");
    }
    check_probs(probabilities, "probabilities");
  } else {
    if (means.empty() || means.size() != variances.size() ||
        means.size() != weights.size()) {
      throw Error("toy distribution: component arrays must align");
    }
    for (double v : variances) {
      if (!(v > 0)) throw Error("toy distribution: variances must be positive");
    }
    check_probs(weights, "weights");
  }
}

double ToyDistribution::sample(RngStream& rng) const {
  const std::vector<double>& probs =
      kind == Kind::discrete_table ? probabilities : weights;
  const double u = rng.uniform01();
  double acc = 0;
  std::size_t idx = probs.size() - 1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) {
      idx = i;
      break;
    }
  }
  if (kind == Kind::discrete_table) return support[idx];
  return means[idx] + std::sqrt(variances[idx]) * rng.normal();
}

double ToyDistribution::pdf(double x) const {
  if (kind == Kind::discrete_table) {
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (std::abs(x - support[i]) < 1e-9) return probabilities[i];
    }
    return 0.0;
  }
  double acc = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double s = std::sqrt(variances[i]);
    const double z = (x - means[i]) / s;
    acc += weights[i] * std::exp(-0.5 * z * z) /
           (s * std::sqrt(2.0 * std::numbers::pi));
  }
  return acc;
}

double optimal_discriminator(double p_data_at_x, double p_g_at_x) {
  if (p_data_at_x < 0 || p_g_at_x < 0) {
    throw Error("optimal_discriminator: densities must be non-negative");
  }
  if (p_data_at_x == 0 && p_g_at_x == 0) {
    throw Error("optimal_discriminator: both densities zero");
  }
  return p_data_at_x / (p_data_at_x + p_g_at_x);
}

namespace {

struct ToyMlp {
  TensorD w1, b1, w2, b2, w3, b3;

  explicit ToyMlp(std::size_t hidden, RngStream& rng)
      : w1(TensorD::normal({1, hidden}, rng, 0.0, 1.0, true)),
        b1(Shape{hidden}, 0.0, true),
        w2(TensorD::normal({hidden, hidden}, rng, 0.0,
                           1.0 / std::sqrt(static_cast<double>(hidden)),
                           true)),
        b2(Shape{hidden}, 0.0, true),
        w3(TensorD::normal({hidden, 1}, rng, 0.0,
                           1.0 / std::sqrt(static_cast<double>(hidden)),
                           true)),
        b3(Shape{1}, 0.0, true) {}

  TensorD forward(const TensorD& x) const {
    auto h1 = tanh(matmul(x, w1) + b1);
    auto h2 = tanh(matmul(h1, w2) + b2);
    auto out = sigmoid(matmul(h2, w3) + b3);
    return reshape(out, Shape{x.shape()[0]});
  }

  std::vector<TensorD> params() { return {w1, b1, w2, b2, w3, b3}; }
};

}  // namespace

std::vector<double> train_toy_discriminator(
    const ToyDistribution& p_data, const ToyDistribution& p_g,
    const ToyRigConfig& cfg, std::span<const double> eval_points) {
  p_data.validate();
  p_g.validate();
  if (cfg.hidden < 1 || cfg.steps < 1 || cfg.batch < 2) {
    throw Error("toy rig: hidden/steps must be positive, batch >= 2");
  }
  RngStream init = RngStream::derive(cfg.seed, "toy/init");
  RngStream data = RngStream::derive(cfg.seed, "toy/data");
  ToyMlp mlp(cfg.hidden, init);

  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.beta1 = 0.9;
  AdamOptimizer<double> opt(mlp.params(), tc);

  std::vector<double> real(cfg.batch), fake(cfg.batch);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    for (double& v : real) v = p_data.sample(data);
    for (double& v : fake) v = p_g.sample(data);
    TensorD xr(Shape{cfg.batch, 1}, std::vector<double>(real));
    TensorD xf(Shape{cfg.batch, 1}, std::vector<double>(fake));
    auto loss = d_loss(mlp.forward(xr), mlp.forward(xf));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }

  TensorD xe(Shape{eval_points.size(), 1},
             std::vector<double>(eval_points.begin(), eval_points.end()));
  auto out = mlp.forward(xe);
  return std::vector<double>(out.data().begin(), out.data().end());
}

}  // namespace hdc
