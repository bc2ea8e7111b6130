#include "hdcgan/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "hdcgan/curves.hpp"
#include "hdcgan/dataset.hpp"
#include "hdcgan/image.hpp"
#include "hdcgan/layers.hpp"
#include "hdcgan/metrics.hpp"
#include "hdcgan/model.hpp"
#include "hdcgan/training.hpp"

namespace hdc {
namespace {

namespace fs = std::filesystem;

// Timestamps are allowed here and nowhere else among the outputs.
void write_run_log(const fs::path& dir, int argc, const char* const* argv) {
  fs::create_directories(dir);
  std::ofstream log(dir / "run.log", std::ios::app);
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S",
                std::gmtime(&now));
  log << stamp << "Z";
  for (int i = 0; i < argc; ++i) log << ' ' << argv[i];
  log << '\n';
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(dir.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Image> load_images(const fs::path& dir) {
  std::vector<Image> out;
  for (const fs::path& f : image_files(dir)) out.push_back(load_image(f));
  if (out.empty()) throw Error("no images in " + dir.string());
  return out;
}

std::pair<std::size_t, std::size_t> parse_telescope(const std::string& s) {
  const std::size_t x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == s.size()) {
    throw Error("telescope must look like Z1xZ2, got '" + s + "'");
  }
  try {
    return {std::stoull(s.substr(0, x)), std::stoull(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw Error("telescope must look like Z1xZ2, got '" + s + "'");
  }
}

BlockOrder parse_order(const std::string& s) {
  if (s == "act-norm") return BlockOrder::act_then_norm;
  if (s == "norm-act") return BlockOrder::norm_then_act;
  throw Error("order must be act-norm or norm-act, got '" + s + "'");
}

Interpolation parse_interp(const std::string& s) {
  if (s == "bilinear") return Interpolation::bilinear;
  if (s == "nearest") return Interpolation::nearest;
  throw Error("interp must be bilinear or nearest, got '" + s + "'");
}

CropSpec read_boxes_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CropSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("file,", 0) == 0)) {
      continue;
    }
    std::stringstream ss(line);
    std::string file, cell;
    CropBox box;
    if (!std::getline(ss, file, ',')) {
      throw Error("boxes line " + std::to_string(line_no) + " malformed");
    }
    std::size_t* fields[4] = {&box.x, &box.y, &box.w, &box.h};
    for (std::size_t* f : fields) {
      if (!std::getline(ss, cell, ',')) {
        throw Error("boxes line " + std::to_string(line_no) +
                    " needs file,x,y,w,h");
      }
      *f = std::stoull(cell);
    }
    spec.boxes[file] = box;
  }
  return spec;
}

void save_sample_grid(Network<float>& gen, std::uint64_t seed,
                      std::size_t count, std::size_t cols,
                      const fs::path& path) {
  RngStream probe = RngStream::derive(seed, "probe");
  TensorF z = TensorF::normal({count, gen.config.latent_dim}, probe);
  const std::vector<Image> imgs = batch_to_images(gen.forward(z, false));
  fs::create_directories(path.parent_path());
  save_png(tile_grid(imgs, cols), path);
}

// ---- subcommand bodies ----

struct DatasetArgs {
  std::string in, out, attributes, boxes;
  std::size_t size = 32;
  bool mirror = true;
};

int cmd_dataset_build(const DatasetArgs& a) {
  CropSpec crop;
  if (!a.boxes.empty()) crop = read_boxes_csv(a.boxes);
  IngestReport rep = ingest(a.in, fs::path(a.out) / "images", a.size, crop,
                            a.attributes);
  for (const std::string& w : rep.warnings) {
    std::cerr << "warning: " << w << '\n';
  }
  for (SampleRecord& r : rep.manifest.records) {
    r.path = "images/" + r.path;
  }
  DatasetManifest manifest =
      a.mirror ? mirror_augment(rep.manifest) : rep.manifest;
  write_manifest(manifest, fs::path(a.out) / "manifest.csv");
  write_stats_json(manifest, fs::path(a.out) / "stats.json");
  std::cout << "ingested " << rep.manifest.records.size() << " images ("
            << rep.skipped << " skipped), manifest has "
            << manifest.records.size() << " records\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, checkpoint, attribute;
  std::string telescope = "1x1";
  std::string order = "act-norm";
  std::string interp = "bilinear";
  std::size_t size = 32, latent = 100, filters = 64, channels = 3;
  std::size_t batch = 32, epochs = 1, checkpoint_every = 0;
  double lr = 2e-4, noise_amp = 0.1;
  std::uint64_t seed = 0;
  bool no_noise_d = false, no_noise_g = false;
  bool epochs_given = false;
};

int cmd_train(const TrainArgs& a) {
  const auto [z1, z2] = parse_telescope(a.telescope);
  NetworkConfig nc;
  nc.base_height = nc.base_width = a.size;
  nc.zeta1 = z1;
  nc.zeta2 = z2;
  nc.latent_dim = a.latent;
  nc.n_filters = a.filters;
  nc.channels = a.channels;
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.noise_amplitude = a.noise_amp;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  tc.checkpoint_every = a.checkpoint_every;
  tc.noise_on_d = !a.no_noise_d;
  tc.noise_on_g = !a.no_noise_g;
  tc.block_order = parse_order(a.order);
  tc.interpolation = parse_interp(a.interp);

  TrainState<float> st;
  if (a.checkpoint.empty()) {
    st = make_train_state<float>(nc, tc);
  } else {
    // Resuming continues the stored trajectory; the architecture and
    // schedule come from the checkpoint, only the epoch target may be
    // raised from the command line.
    st = load_checkpoint<float>(a.checkpoint);
    if (a.epochs_given) st.config.epochs = a.epochs;
  }
  const NetworkConfig& net_cfg = st.generator.config;
  const TrainConfig& run_cfg = st.config;

  DatasetManifest manifest = read_manifest(a.data);
  if (manifest.image_size != net_cfg.base_height) {
    throw Error("dataset images are " + std::to_string(manifest.image_size) +
                "px, the model wants base size " +
                std::to_string(net_cfg.base_height));
  }
  DatasetLoader loader(manifest, fs::path(a.data).parent_path());
  BatchStream stream(manifest, a.attribute, run_cfg.batch_size,
                     RngStream::derive(run_cfg.seed, "batches"));
  for (std::uint64_t i = 0; i < st.step; ++i) stream.next_batch();

  const fs::path out(a.out);
  fs::create_directories(out);
  const std::size_t bpe = stream.batches_per_epoch();
  const bool telescoped = net_cfg.zeta1 != 1 || net_cfg.zeta2 != 1;
  for (std::uint64_t e = st.epoch; e < run_cfg.epochs; ++e) {
    st.epoch = e;
    while (st.step < (e + 1) * bpe) {
      TensorF real = loader.load_batch(stream.next_batch());
      if (telescoped) {
        real = apply_glasses(real, net_cfg.zeta1, net_cfg.zeta2,
                             run_cfg.interpolation);
      }
      train_step(st, real);
      if (run_cfg.checkpoint_every != 0 &&
          st.step % run_cfg.checkpoint_every == 0) {
        fs::create_directories(out / "checkpoints");
        save_checkpoint(st, out / "checkpoints" /
                                ("step_" + std::to_string(st.step) +
                                 ".ckpt"));
      }
    }
    st.epoch = e + 1;
    save_sample_grid(st.generator, run_cfg.seed, 64, 8,
                     out / "samples" /
                         ("epoch_" + std::to_string(e + 1) + ".png"));
    const LossEntry& last = st.loss_history.back();
    std::cout << "epoch " << e + 1 << "/" << run_cfg.epochs << " step "
              << st.step << " d_loss " << last.d_loss << " g_loss "
              << last.g_loss << '\n';
  }
  save_checkpoint(st, out / "final.ckpt");
  write_loss_csv(st.loss_history, out / "loss.csv");
  std::cout << "wrote " << (out / "final.ckpt").string() << " and "
            << (out / "loss.csv").string() << '\n';
  return 0;
}

struct GenerateArgs {
  std::string checkpoint, out;
  std::size_t count = 64, cols = 8;
  std::uint64_t seed = 0;
  bool individual = false;
};

int cmd_generate(const GenerateArgs& a) {
  TrainState<float> st = load_checkpoint<float>(a.checkpoint);
  RngStream rng = RngStream::derive(a.seed, "generate");
  TensorF z = TensorF::normal({a.count, st.generator.config.latent_dim},
                              rng);
  const std::vector<Image> imgs =
      batch_to_images(st.generator.forward(z, false));
  const fs::path out(a.out);
  fs::create_directories(out);
  save_png(tile_grid(imgs, a.cols), out / "grid.png");
  if (a.individual) {
    char name[32];
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      std::snprintf(name, sizeof name, "sample_%04zu.png", i);
      save_png(imgs[i], out / name);
    }
  }
  std::cout << "wrote " << imgs.size() << " samples to " << out.string()
            << '\n';
  return 0;
}

struct MsssimArgs {
  std::string images, out = "msssim";
  std::size_t pairs = kMsssimProtocolPairs, resize = kMsssimProtocolResize;
  std::uint64_t seed = 0;
  bool per_pair = false;
};

int cmd_eval_msssim(const MsssimArgs& a) {
  const std::vector<Image> imgs = load_images(a.images);
  RngStream rng = RngStream::derive(a.seed, "msssim");
  MetricReport report =
      msssim_protocol(imgs, a.pairs, a.resize, rng, {}, a.per_pair);
  report.seed = a.seed;
  write_report_json(report, a.out + ".json");
  write_report_csv(report, a.out + ".csv");
  std::printf("ms_ssim %.9g over %zu pairs\n", report.value, report.pairs);
  return 0;
}

struct FdArgs {
  std::string real, fake, features_file, out = "fd";
  std::string extractor = "pixels:8";
  std::string mode = "pooled";
  std::size_t resize = kFdProtocolResize;
  std::uint64_t seed = 0;
};

std::vector<std::vector<double>> fd_features(const fs::path& dir,
                                             std::size_t resize_to,
                                             const std::string& spec) {
  std::vector<Image> imgs = load_images(dir);
  for (Image& img : imgs) img = resize(img, resize_to, resize_to);
  return extract_features(imgs, spec);
}

int cmd_eval_fd(const FdArgs& a) {
  if (a.mode != "pooled" && a.mode != "per-epoch") {
    throw Error("mode must be pooled or per-epoch, got '" + a.mode + "'");
  }
  const std::vector<std::vector<double>> real_feats =
      a.features_file.empty()
          ? fd_features(a.real, a.resize, a.extractor)
          : read_feature_file(a.features_file);
  const GaussianSummary real_fit = fit_gaussian(real_feats);

  MetricReport report;
  report.metric = "frechet_distance";
  report.resize = a.resize;
  report.seed = a.seed;
  if (a.mode == "pooled") {
    const auto fake_feats = fd_features(a.fake, a.resize, a.extractor);
    report.pairs = fake_feats.size();
    report.value = frechet_distance(real_fit, fit_gaussian(fake_feats));
  } else {
    // Each subdirectory is one epoch; scores are averaged.
    std::vector<fs::path> epochs;
    for (const auto& e : fs::directory_iterator(a.fake)) {
      if (e.is_directory()) epochs.push_back(e.path());
    }
    std::sort(epochs.begin(), epochs.end());
    if (epochs.empty()) {
      throw Error("per-epoch mode expects subdirectories under " + a.fake);
    }
    double acc = 0;
    for (const fs::path& dir : epochs) {
      const auto feats = fd_features(dir, a.resize, a.extractor);
      report.pairs += feats.size();
      const double fd = frechet_distance(real_fit, fit_gaussian(feats));
      report.per_pair.push_back(fd);
      acc += fd;
    }
    report.value = acc / static_cast<double>(epochs.size());
  }
  write_report_json(report, a.out + ".json");
  write_report_csv(report, a.out + ".csv");
  std::printf("frechet_distance %.9g\n", report.value);
  return 0;
}

struct NnArgs {
  std::string query, corpus, out;
  std::size_t k = 5, resize = 0;
};

int cmd_nn(const NnArgs& a) {
  Image query = load_image(a.query);
  const std::vector<fs::path> files = image_files(a.corpus);
  if (files.empty()) throw Error("no images in " + a.corpus);
  std::vector<Image> corpus;
  corpus.reserve(files.size());
  for (const fs::path& f : files) corpus.push_back(load_image(f));
  if (a.resize != 0) {
    query = resize(query, a.resize, a.resize);
    for (Image& img : corpus) img = resize(img, a.resize, a.resize);
  }
  const auto ranked = nearest_neighbors(query, corpus, a.k);

  std::ostringstream table;
  table << "rank,index,file,distance\n";
  char row[512];
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::snprintf(row, sizeof row, "%zu,%zu,%s,%.9g\n", r + 1,
                  ranked[r].first,
                  files[ranked[r].first].filename().string().c_str(),
                  ranked[r].second);
    table << row;
  }
  std::cout << table.str();
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    out << table.str();
  }
  return 0;
}

struct MomentsArgs {
  std::string out;
  double mean0 = 0.5, var0 = 1.5, omega = 0.0, tau = 1.0;
  std::size_t iters = 12, samples = 20000;
  std::uint64_t seed = 0;
};

int cmd_moments_demo(const MomentsArgs& a) {
  const SeluParams p = solve_selu_fixed_point();
  std::ostringstream table;
  char row[192];
  std::snprintf(row, sizeof row, "lambda %.17g alpha %.17g\n", p.lambda,
                p.alpha);
  std::cout << row;
  table << "iter,mean,variance,mc_mean,mc_variance\n";
  RngStream rng = RngStream::derive(a.seed, "moments");
  MomentPair m{a.mean0, a.var0};
  for (std::size_t i = 0; i <= a.iters; ++i) {
    const MomentPair mc = moment_map(m, a.omega, a.tau, p, a.samples, rng);
    std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, m.mean,
                  m.variance, mc.mean, mc.variance);
    table << row;
    const MomentPair pre{m.mean * a.omega, m.variance * a.tau};
    m = selu_gaussian_moments(pre.mean, pre.variance, p);
  }
  std::cout << table.str();
  std::printf("converged to (%.6g, %.6g); fixed point is (0, 1)\n", m.mean,
              m.variance);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    out << table.str();
  }
  return 0;
}

struct CurvesArgs {
  std::string in, out = "curves";
};

int cmd_emit_curves(const CurvesArgs& a) {
  const CurveOutputs files = emit_curves(a.in, a.out);
  std::cout << "wrote " << files.tidy_csv.string() << ", "
            << files.svg.string() << ", " << files.fit_json.string() << '\n';
  return 0;
}

std::string strip_ws(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// CLI11 only reads config files for the app parse() was called on, never for
// a named subcommand, so --config is expanded here. Keys are option names
// without the leading dashes; flags given on the command line always win.
std::vector<std::string> expand_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    }
  }
  if (file.empty()) return args;

  std::ifstream in(file);
  if (!in) throw CLI::FileError::Missing(file);
  std::string line;
  while (std::getline(in, line)) {
    line = strip_ws(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (line[0] == '[' || eq == std::string::npos || eq == 0) {
      throw CLI::ConfigError("cannot parse config line: " + line);
    }
    const std::string flag = "--" + strip_ws(line.substr(0, eq));
    std::string value = strip_ws(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const bool given =
        std::any_of(args.begin(), args.end(), [&](const std::string& a) {
          return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    if (!given) args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"HDCGAN training and evaluation pipeline"};
  app.require_subcommand(1);
  int rc = 0;

  DatasetArgs da;
  auto* ds = app.add_subcommand("dataset-build",
                                "Ingest a directory of images into a "
                                "manifest + stats dataset");
  ds->set_config("--config");
  ds->add_option("--in", da.in, "Input image directory")->required();
  ds->add_option("--out", da.out, "Output dataset directory")->required();
  ds->add_option("--size", da.size, "Target square size")
      ->capture_default_str();
  ds->add_option("--attributes", da.attributes,
                 "Sidecar attribute CSV (file,<attribute>,...)");
  ds->add_option("--boxes", da.boxes, "Crop box CSV (file,x,y,w,h)");
  ds->add_flag("--mirror,!--no-mirror", da.mirror,
               "Append mirrored records")
      ->capture_default_str();
  ds->callback([&] {
    write_run_log(da.out, argc, argv);
    rc = cmd_dataset_build(da);
  });

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the GAN on a dataset");
  tr->set_config("--config");
  tr->add_option("--data", ta.data, "Dataset manifest CSV")->required();
  tr->add_option("--out", ta.out, "Run output directory")->required();
  tr->add_option("--size", ta.size, "Base image size (pre-telescope)")
      ->capture_default_str();
  tr->add_option("--telescope", ta.telescope, "Enlargement factors Z1xZ2")
      ->capture_default_str();
  tr->add_option("--latent", ta.latent, "Latent dimension")
      ->capture_default_str();
  tr->add_option("--filters", ta.filters, "Base filter count")
      ->capture_default_str();
  tr->add_option("--channels", ta.channels, "Image channels")
      ->capture_default_str();
  tr->add_option("--batch", ta.batch, "Batch size")->capture_default_str();
  tr->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  auto* epochs_opt =
      tr->add_option("--epochs", ta.epochs, "Epochs to train")
          ->capture_default_str();
  tr->add_option("--seed", ta.seed, "Master seed")->capture_default_str();
  tr->add_option("--noise-amp", ta.noise_amp,
                 "Gaussian noise amplitude on D and G inputs")
      ->capture_default_str();
  tr->add_flag("--no-noise-d", ta.no_noise_d,
               "Disable noise on the discriminator input");
  tr->add_flag("--no-noise-g", ta.no_noise_g,
               "Disable noise on the latent input");
  tr->add_option("--order", ta.order, "Block order: act-norm or norm-act")
      ->capture_default_str();
  tr->add_option("--interp", ta.interp,
                 "Telescope interpolation: bilinear or nearest")
      ->capture_default_str();
  tr->add_option("--checkpoint", ta.checkpoint, "Resume from a checkpoint");
  tr->add_option("--checkpoint-every", ta.checkpoint_every,
                 "Save every N steps (0 disables)")
      ->capture_default_str();
  tr->add_option("--attribute", ta.attribute,
                 "Stratify batches on this attribute");
  tr->callback([&] {
    ta.epochs_given = epochs_opt->count() > 0;
    write_run_log(ta.out, argc, argv);
    rc = cmd_train(ta);
  });

  GenerateArgs ga;
  auto* ge = app.add_subcommand("generate",
                                "Sample images from a checkpoint");
  ge->set_config("--config");
  ge->add_option("--checkpoint", ga.checkpoint, "Checkpoint to sample")
      ->required();
  ge->add_option("--out", ga.out, "Output directory")->required();
  ge->add_option("--count", ga.count, "Number of samples")
      ->capture_default_str();
  ge->add_option("--cols", ga.cols, "Grid columns")->capture_default_str();
  ge->add_option("--seed", ga.seed, "Sampling seed")->capture_default_str();
  ge->add_flag("--individual", ga.individual,
               "Also write one PNG per sample");
  ge->callback([&] {
    write_run_log(ga.out, argc, argv);
    rc = cmd_generate(ga);
  });

  MsssimArgs ma;
  auto* ms = app.add_subcommand("eval-msssim",
                                "Mean MS-SSIM over random image pairs");
  ms->set_config("--config");
  ms->add_option("--images", ma.images, "Image directory")->required();
  ms->add_option("--pairs", ma.pairs, "Number of pairs")
      ->capture_default_str();
  ms->add_option("--resize", ma.resize, "Pre-metric resize")
      ->capture_default_str();
  ms->add_option("--seed", ma.seed, "Pair-sampling seed")
      ->capture_default_str();
  ms->add_option("--out", ma.out, "Report basename")->capture_default_str();
  ms->add_flag("--per-pair", ma.per_pair, "Keep per-pair values");
  ms->callback([&] { rc = cmd_eval_msssim(ma); });

  FdArgs fa;
  auto* fd = app.add_subcommand("eval-fd",
                                "Fréchet distance between fitted "
                                "feature Gaussians");
  fd->set_config("--config");
  fd->add_option("--real", fa.real, "Real image directory")->required();
  fd->add_option("--fake", fa.fake, "Generated image directory")
      ->required();
  fd->add_option("--extractor", fa.extractor,
                 "pixels:<K>, randproj:<D>[:<seed>] or file:<path>")
      ->capture_default_str();
  fd->add_option("--features-file", fa.features_file,
                 "Precomputed features for the real side");
  fd->add_option("--resize", fa.resize, "Pre-extraction resize")
      ->capture_default_str();
  fd->add_option("--mode", fa.mode,
                 "pooled, or per-epoch over subdirectories")
      ->capture_default_str();
  fd->add_option("--seed", fa.seed, "Echoed into the report")
      ->capture_default_str();
  fd->add_option("--out", fa.out, "Report basename")->capture_default_str();
  fd->callback([&] { rc = cmd_eval_fd(fa); });

  NnArgs na;
  auto* nn = app.add_subcommand("nn",
                                "Nearest neighbors of a query image");
  nn->set_config("--config");
  nn->add_option("--query", na.query, "Query image")->required();
  nn->add_option("--corpus", na.corpus, "Corpus directory")->required();
  nn->add_option("--k", na.k, "Neighbors to report")->capture_default_str();
  nn->add_option("--resize", na.resize,
                 "Resize both sides (0 keeps native sizes)")
      ->capture_default_str();
  nn->add_option("--out", na.out, "Also write the table to this file");
  nn->callback([&] { rc = cmd_nn(na); });

  MomentsArgs oa;
  auto* mo = app.add_subcommand("moments-demo",
                                "Iterate the selu moment map towards "
                                "its (0,1) fixed point");
  mo->set_config("--config");
  mo->add_option("--mean0", oa.mean0, "Initial mean")->capture_default_str();
  mo->add_option("--var0", oa.var0, "Initial variance")
      ->capture_default_str();
  mo->add_option("--omega", oa.omega, "Weight sum")->capture_default_str();
  mo->add_option("--tau", oa.tau, "Weight square sum")
      ->capture_default_str();
  mo->add_option("--iters", oa.iters, "Iterations")->capture_default_str();
  mo->add_option("--samples", oa.samples, "Monte-Carlo samples")
      ->capture_default_str();
  mo->add_option("--seed", oa.seed, "Monte-Carlo seed")
      ->capture_default_str();
  mo->add_option("--out", oa.out, "Also write the table to this file");
  mo->callback([&] { rc = cmd_moments_demo(oa); });

  CurvesArgs ca;
  auto* cu = app.add_subcommand("emit-curves",
                                "Tidy CSV, SVG plot and line fit from a "
                                "loss log or metric CSV");
  cu->set_config("--config");
  cu->add_option("--in", ca.in, "Input CSV")->required();
  cu->add_option("--out", ca.out, "Output basename")->capture_default_str();
  cu->callback([&] { rc = cmd_emit_curves(ca); });

  if (argc > 0) app.name(argv[0]);
  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}

}  // namespace hdc
