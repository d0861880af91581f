// famed: command-line front end (synth / train / dehaze / eval / analyze / inspect).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "famed/dataset.hpp"
#include "famed/file_util.hpp"
#include "famed/haze_model.hpp"
#include "famed/image_io.hpp"
#include "famed/log.hpp"
#include "famed/metrics.hpp"
#include "famed/network.hpp"
#include "famed/parallel.hpp"
#include "famed/pipeline.hpp"
#include "famed/trainer.hpp"
#include "famed/weight_io.hpp"

namespace fs = std::filesystem;
using namespace famed;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Architecture flags shared by train and inspect.
struct ArchFlags {
  std::string variant = "ss";
  int scales = 0;  // 0: variant default
  int feature_dim = 32;
  std::string pool = "avg";
  bool no_bn = false;
  int front3x3 = 0;

  void attach(CLI::App* app) {
    app->add_option("--variant", variant, "ss | gp | lp")->capture_default_str();
    app->add_option("--scales", scales, "pyramid scales (default 1 for ss, 3 otherwise)");
    app->add_option("--feature-dim", feature_dim, "channels per block")->capture_default_str();
    app->add_option("--pool", pool, "avg | max")->capture_default_str();
    app->add_flag("--no-bn", no_bn, "drop batch normalization");
    app->add_option("--front3x3", front3x3, "channels of an optional 3x3 front conv (0 = off)")
        ->capture_default_str();
  }

  NetConfig config() const {
    NetConfig c;
    try {
      c.variant = parse_variant(variant);
      c.pool_mode = parse_pool_mode(pool);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    c.scales = scales > 0 ? scales : (c.variant == Variant::SS ? 1 : 3);
    c.feature_dim = feature_dim;
    c.use_bn = !no_bn;
    c.front_conv3x3_channels = front3x3;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no PNG/PPM images in '" + dir.string() + "'");
  return out;
}

DehazeOptions dehaze_options(int working_size, bool no_gf, int radius, float eps, int down) {
  DehazeOptions o;
  o.working_size = working_size;
  if (no_gf) {
    o.refine.reset();
  } else {
    o.refine = GuidedFilterParams{radius, eps, down};
    o.refine->validate();
  }
  return o;
}

// ---------------------------------------------------------------------------

struct SynthCmd {
  SynthConfig cfg;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--clear-dir", cfg.clear_dir, "clear images (default: procedural scenes)");
    app->add_option("--depth-dir", cfg.depth_dir, "depth maps matched by file stem");
    app->add_option("--count", cfg.procedural_count, "procedural scene count")->capture_default_str();
    app->add_option("--height", cfg.height, "procedural scene height")->capture_default_str();
    app->add_option("--width", cfg.width, "procedural scene width")->capture_default_str();
    app->add_option("--beta-min", cfg.beta_min)->capture_default_str();
    app->add_option("--beta-max", cfg.beta_max)->capture_default_str();
    app->add_option("--airlight-min", cfg.airlight_min)->capture_default_str();
    app->add_option("--airlight-max", cfg.airlight_max)->capture_default_str();
    app->add_option("--val-fraction", cfg.val_fraction)->capture_default_str();
    app->add_option("--test-fraction", cfg.test_fraction)->capture_default_str();
    app->add_option("--seed", cfg.seed)->capture_default_str();
  }

  int run() {
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    std::cout << "synth: " << cfg.describe() << " out=" << out << "\n";
    const DatasetManifest m = synthesize_dataset(cfg, out);
    std::map<std::string, int> counts;
    for (const auto& e : m.entries) ++counts[e.split];
    std::cout << "wrote " << m.entries.size() << " pairs (";
    bool first = true;
    for (const auto& [split, n] : counts) {
      std::cout << (first ? "" : ", ") << split << " " << n;
      first = false;
    }
    std::cout << ") and " << (fs::path(out) / kManifestName).string() << "\n";
    return 0;
  }
};

struct TrainCmd {
  ArchFlags arch;
  TrainConfig cfg;
  std::string manifest;
  std::string split = "train";
  std::string out;
  std::int64_t log_every = 100;

  void attach(CLI::App* app) {
    arch.attach(app);
    app->add_option("--manifest", manifest, "dataset manifest.tsv")->required();
    app->add_option("--split", split, "manifest split to train on")->capture_default_str();
    app->add_option("--out", out, "final weight file")->required();
    app->add_option("--seed", cfg.seed, "initialization and sampling seed")->capture_default_str();
    app->add_option("--batch", cfg.batch_size)->capture_default_str();
    app->add_option("--crop", cfg.crop)->capture_default_str();
    app->add_option("--lr", cfg.lr0, "initial learning rate")->capture_default_str();
    app->add_option("--lr-drops", cfg.lr_drop_points, "fractions of --iters where lr drops")
        ->capture_default_str();
    app->add_option("--lr-factor", cfg.lr_drop_factor)->capture_default_str();
    app->add_option("--momentum", cfg.momentum)->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    app->add_option("--alpha", cfg.alpha_scales, "per-scale loss weights")->capture_default_str();
    app->add_option("--alpha-fusion", cfg.alpha_fusion)->capture_default_str();
    app->add_option("--iters", cfg.total_iters)->capture_default_str();
    app->add_option("--checkpoint-every", cfg.checkpoint_every, "0 disables")->capture_default_str();
    app->add_option("--loss-log", cfg.loss_log_path, "CSV of iter,lr,loss");
    app->add_option("--log-every", log_every, "progress line interval")->capture_default_str();
  }

  int run() {
    const NetConfig net_cfg = arch.config();
    cfg.checkpoint_path = out;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    std::cout << "train: " << net_cfg.serialize() << " " << cfg.describe()
              << " manifest=" << manifest << " split=" << split << "\n";
    const DatasetManifest m = read_manifest(manifest);
    const std::vector<ImagePair> pairs = load_pairs(m, split);
    if (pairs.empty()) throw std::runtime_error("split '" + split + "' of " + manifest + " is empty");
    std::cout << "params " << parameter_count(net_cfg) << ", " << pairs.size() << " pairs\n";

    TrainHooks hooks;
    std::vector<double> window;
    hooks.on_iteration = [&](const LossRecord& r) {
      window.push_back(r.loss);
      if (log_every > 0 && ((r.iter + 1) % log_every == 0 || r.iter + 1 == cfg.total_iters)) {
        double s = 0.0;
        for (double v : window) s += v;
        std::cout << "iter " << r.iter + 1 << " lr " << r.lr << " loss " << s / window.size()
                  << std::endl;
        window.clear();
      }
    };
    try {
      const TrainResult result = train(pairs, net_cfg, cfg, hooks);
      save_weights(result.net, out);
    } catch (const TrainingDiverged& e) {
      std::cerr << "famed train: " << e.what() << "\n";
      return kExitRuntime;
    }
    std::cout << "saved " << out << "\n";
    return 0;
  }
};

struct DehazeCmd {
  std::string weights;
  std::string input;
  std::string output;
  std::string method = "net";
  int working_size = 360;
  int gf_radius = 48;
  float gf_eps = 1e-4f;
  int gf_down = 4;
  bool no_gf = false;

  void attach(CLI::App* app) {
    app->add_option("--weights", weights, "weight file (method net)");
    app->add_option("--input", input, "hazy image or directory")->required();
    app->add_option("--output", output, "output image or directory")->required();
    app->add_option("--method", method, "net | dcp")->capture_default_str();
    app->add_option("--working-size", working_size, "longest side seen by the network (0 = native)")
        ->capture_default_str();
    app->add_option("--gf-radius", gf_radius)->capture_default_str();
    app->add_option("--gf-eps", gf_eps)->capture_default_str();
    app->add_option("--gf-down", gf_down)->capture_default_str();
    app->add_flag("--no-gf", no_gf, "skip guided-filter refinement of K");
  }

  int run() {
    if (method != "net" && method != "dcp") throw UsageError("--method must be net or dcp");
    if (method == "net" && weights.empty()) throw UsageError("--weights is required for method net");
    DehazeOptions opts;
    try {
      opts = dehaze_options(working_size, no_gf, gf_radius, gf_eps, gf_down);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    std::cout << "dehaze: method=" << method << " working_size=" << working_size << " gf="
              << (no_gf ? std::string("off")
                        : "r" + std::to_string(gf_radius) + ",d" + std::to_string(gf_down))
              << " gf_eps=" << gf_eps << "\n";
    std::optional<Network> net;
    if (method == "net") net = load_network(weights);

    auto process = [&](const fs::path& in, const fs::path& out) {
      const Tensor hazy = load_image(in.string());
      const Tensor j = net ? dehaze_image(*net, hazy, opts) : dcp_baseline_dehaze(hazy).dehazed;
      save_image(j, out.string());
    };
    if (fs::is_directory(input)) {
      const auto files = list_images(input);
      fs::create_directories(output);
      parallel_for(files.size(), [&](std::size_t i) {
        process(files[i], fs::path(output) / (files[i].stem().string() + ".png"));
      });
      std::cout << "dehazed " << files.size() << " images into " << output << "\n";
    } else {
      process(input, output);
      std::cout << "wrote " << output << "\n";
    }
    return 0;
  }
};

struct EvalCmd {
  std::string manifest;
  std::string split = "test";
  std::string method = "net";
  std::string weights;
  std::string pred_dir;
  std::string target_dir;
  std::string csv;
  int working_size = 360;
  bool no_gf = false;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest.tsv");
    app->add_option("--split", split)->capture_default_str();
    app->add_option("--method", method, "net | dcp | hazy (manifest mode)")->capture_default_str();
    app->add_option("--weights", weights, "weight file (method net)");
    app->add_option("--pred", pred_dir, "prediction directory (directory mode)");
    app->add_option("--target", target_dir, "target directory (directory mode)");
    app->add_option("--working-size", working_size)->capture_default_str();
    app->add_flag("--no-gf", no_gf);
    app->add_option("--csv", csv, "write per-image rows to this file");
  }

  int run() {
    const bool dir_mode = !pred_dir.empty() || !target_dir.empty();
    if (dir_mode == !manifest.empty()) {
      throw UsageError("give either --manifest or both --pred and --target");
    }
    EvalReport report;
    if (dir_mode) {
      if (pred_dir.empty() || target_dir.empty()) throw UsageError("--pred and --target go together");
      std::cout << "eval: pred=" << pred_dir << " target=" << target_dir << "\n";
      for (const auto& p : list_images(pred_dir)) {
        fs::path t = fs::path(target_dir) / p.filename();
        if (!fs::exists(t)) {
          for (const char* ext : {".png", ".ppm"}) {
            const fs::path alt = fs::path(target_dir) / (p.stem().string() + ext);
            if (fs::exists(alt)) t = alt;
          }
        }
        if (!fs::exists(t)) throw std::runtime_error("no target for " + p.string());
        report.add(p.stem().string(), "", load_image(p.string()), load_image(t.string()));
      }
    } else {
      if (method != "net" && method != "dcp" && method != "hazy") {
        throw UsageError("--method must be net, dcp or hazy");
      }
      if (method == "net" && weights.empty()) throw UsageError("--weights is required for method net");
      std::cout << "eval: manifest=" << manifest << " split=" << split << " method=" << method
                << " working_size=" << working_size << " gf=" << (no_gf ? "off" : "on") << "\n";
      const DatasetManifest m = read_manifest(manifest);
      const auto entries = m.split(split);
      if (entries.empty()) throw std::runtime_error("split '" + split + "' is empty");
      std::optional<Network> net;
      if (method == "net") net = load_network(weights);
      const DehazeOptions opts = dehaze_options(working_size, no_gf, 48, 1e-4f, 4);
      std::vector<EvalRow> rows(entries.size());
      parallel_for(entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = *entries[i];
        const Tensor hazy = load_image(m.resolve(e.hazy));
        const Tensor clear = load_image(m.resolve(e.clear));
        Tensor pred;
        if (method == "net") {
          pred = quantize8(dehaze_image(*net, hazy, opts));
        } else if (method == "dcp") {
          pred = quantize8(dcp_baseline_dehaze(hazy).dehazed);
        } else {
          pred = hazy;
        }
        rows[i] = EvalRow{e.name, e.split, psnr(pred, clear), ssim(pred, clear)};
      });
      report.rows = std::move(rows);
    }
    for (const auto& r : report.rows) {
      std::cout << std::left << std::setw(24) << r.name << " psnr " << format_psnr(r.psnr)
                << " ssim " << std::fixed << std::setprecision(4) << r.ssim << "\n";
      std::cout.unsetf(std::ios::fixed);
    }
    std::cout << "mean psnr " << format_psnr(report.mean_psnr()) << " ssim " << std::fixed
              << std::setprecision(4) << report.mean_ssim() << " over " << report.rows.size()
              << " images\n";
    if (!csv.empty()) write_file_atomic(csv, report.to_csv());
    return 0;
  }
};

struct AnalyzeDepthCmd {
  std::string manifest;
  std::string depth_dir;
  DepthStatsOptions opts;
  std::string csv;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest, "use the depth of every manifest entry");
    app->add_option("--depth-dir", depth_dir, "directory of depth maps");
    app->add_option("--patch", opts.patch)->capture_default_str();
    app->add_option("--levels", opts.levels)->capture_default_str();
    app->add_option("--stride", opts.stride)->capture_default_str();
    app->add_option("--csv", csv, "write the histogram as CSV");
  }

  int run() {
    if (manifest.empty() == depth_dir.empty()) throw UsageError("give either --manifest or --depth-dir");
    std::cout << "analyze depth-stats: patch=" << opts.patch << " levels=" << opts.levels
              << " stride=" << opts.stride << "\n";
    std::vector<Tensor> depths;
    if (!manifest.empty()) {
      const DatasetManifest m = read_manifest(manifest);
      for (const auto& e : m.entries) depths.push_back(m.load_depth(e));
    } else {
      for (const auto& p : list_images(depth_dir)) depths.push_back(load_gray(p.string()));
    }
    const HistogramTable h = depth_level_stats(depths, opts);
    std::cout << "levels frequency cumulative\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      std::cout << h.bin_centers[i] << " " << h.frequency[i] << " " << h.cumulative[i] << "\n";
    }
    const double at_least3 = 1.0 - h.mass_below(2);
    std::cout << "patches spanning >= 3 levels: " << at_least3 << "\n";
    if (!csv.empty()) write_file_atomic(csv, h.to_csv());
    return 0;
  }
};

struct AnalyzeRegularityCmd {
  std::string method = "dcp";
  std::string images;
  std::string manifest;
  std::string split = "test";
  std::string weights;
  int patch = 7;
  int bins = 20;
  std::string csv;

  void attach(CLI::App* app) {
    app->add_option("--method", method, "dcp (dark channel) | net (1 - 1/K)")->capture_default_str();
    app->add_option("--images", images, "directory of haze-free images");
    app->add_option("--manifest", manifest, "use the clear images of a manifest split");
    app->add_option("--split", split)->capture_default_str();
    app->add_option("--weights", weights, "weight file (method net)");
    app->add_option("--patch", patch)->capture_default_str();
    app->add_option("--bins", bins)->capture_default_str();
    app->add_option("--csv", csv, "write the histogram as CSV");
  }

  int run() {
    if (method != "dcp" && method != "net") throw UsageError("--method must be dcp or net");
    if (images.empty() == manifest.empty()) throw UsageError("give either --images or --manifest");
    if (method == "net" && weights.empty()) throw UsageError("--weights is required for method net");
    std::cout << "analyze regularity: method=" << method << " patch=" << patch << " bins=" << bins
              << "\n";
    std::vector<Tensor> imgs;
    if (!images.empty()) {
      for (const auto& p : list_images(images)) imgs.push_back(load_image(p.string()));
    } else {
      const DatasetManifest m = read_manifest(manifest);
      for (const auto* e : m.split(split)) imgs.push_back(load_image(m.resolve(e->clear)));
    }
    HistogramTable h;
    if (method == "dcp") {
      h = regularity_histogram(imgs, RegularityQuantity::DarkChannel, {}, patch, bins);
    } else {
      const Network net = load_network(weights);
      const DehazeOptions raw{0, std::nullopt};
      h = regularity_histogram(
          imgs, RegularityQuantity::OneMinusInvKhat,
          [&](const Tensor& img) { return estimate_k(net, img, raw); }, patch, bins);
    }
    std::cout << h.to_text();
    std::cout << "mass in lowest 4 bins: " << h.mass_below(4) << "\n";
    if (!csv.empty()) write_file_atomic(csv, h.to_csv());
    return 0;
  }
};

struct InspectCmd {
  ArchFlags arch;
  std::string weights;
  std::string size = "128x128";

  void attach(CLI::App* app) {
    arch.attach(app);
    app->add_option("--weights", weights, "read the architecture from a weight file");
    app->add_option("--size", size, "HxW for the FLOP count")->capture_default_str();
  }

  int run() {
    int h = 0, w = 0;
    char x = 0;
    std::istringstream ss(size);
    if (!(ss >> h >> x >> w) || x != 'x' || h < 1 || w < 1) {
      throw UsageError("--size must look like 128x128");
    }
    const NetConfig cfg = weights.empty() ? arch.config() : load_weights(weights).config;
    const FlopReport f = count_flops(cfg, h, w);
    std::cout << "config " << cfg.serialize() << "\n";
    std::cout << "params " << parameter_count(cfg) << "\n";
    std::cout << "flops_conv_macs " << f.conv_macs << "\n";
    std::cout << "flops_all_ops " << f.all_ops() << "\n";
    std::cout << "flops_element_ops " << f.element_ops() << "\n";
    std::cout << "flops_size " << h << "x" << w << "\n";
    std::cout << "receptive_field " << receptive_field(cfg) << "\n";
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"famed: single-image dehazing with FAMED-Net"};
  app.footer(
      "Environment:\n"
      "  FAMED_THREADS  worker threads for synth, eval and directory dehazing (default 1)\n"
      "  FAMED_LOG      log level: debug, info, warn, error, off (default info)\n"
      "Exit status: 0 success, 1 usage error, 2 runtime failure.");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "override FAMED_THREADS");

  SynthCmd synth;
  TrainCmd train_cmd;
  DehazeCmd dehaze;
  EvalCmd eval;
  AnalyzeDepthCmd depth;
  AnalyzeRegularityCmd regularity;
  InspectCmd inspect;

  synth.attach(app.add_subcommand("synth", "synthesize hazy/clear pairs and a manifest"));
  train_cmd.attach(app.add_subcommand("train", "train a network on a manifest split"));
  dehaze.attach(app.add_subcommand("dehaze", "dehaze an image or a directory"));
  eval.attach(app.add_subcommand("eval", "PSNR/SSIM over a manifest split or two directories"));
  auto* analyze = app.add_subcommand("analyze", "dataset and prior statistics");
  analyze->require_subcommand(1);
  depth.attach(analyze->add_subcommand("depth-stats", "depth levels covered per patch"));
  regularity.attach(analyze->add_subcommand("regularity", "haze-free image statistics"));
  inspect.attach(app.add_subcommand("inspect", "parameters, FLOPs and receptive field"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (threads > 0) setenv("FAMED_THREADS", std::to_string(threads).c_str(), 1);

  try {
    if (app.got_subcommand("synth")) return synth.run();
    if (app.got_subcommand("train")) return train_cmd.run();
    if (app.got_subcommand("dehaze")) return dehaze.run();
    if (app.got_subcommand("eval")) return eval.run();
    if (app.got_subcommand("inspect")) return inspect.run();
    if (analyze->got_subcommand("depth-stats")) return depth.run();
    if (analyze->got_subcommand("regularity")) return regularity.run();
  } catch (const UsageError& e) {
    std::cerr << "famed: " << e.what() << "\n" << "run 'famed --help' for usage\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "famed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
