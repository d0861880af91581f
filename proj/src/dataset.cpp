#include "famed/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "famed/file_util.hpp"
#include "famed/guided_filter.hpp"
#include "famed/image_io.hpp"
#include "famed/log.hpp"
#include "famed/ops.hpp"
#include "famed/parallel.hpp"

namespace fs = std::filesystem;

namespace famed {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Random values on a coarse grid, bilinearly upsampled: a smooth field in
// roughly [-1, 1].
Tensor smooth_noise(int h, int w, int grid_h, int grid_w, Rng& rng) {
  Tensor g(Shape{1, 1, grid_h, grid_w});
  for (auto& v : g.data()) v = static_cast<Scalar>(uniform(rng, -1.0, 1.0));
  return bilinear_resize(g, h, w);
}

void normalize_unit(Tensor& t) {
  const Scalar lo = t.min();
  const Scalar hi = t.max();
  const Scalar span = hi > lo ? hi - lo : 1.0f;
  for (auto& v : t.data()) v = (v - lo) / span;
}

std::array<Scalar, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i;
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (i % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  return {static_cast<Scalar>(r), static_cast<Scalar>(g), static_cast<Scalar>(b)};
}

}  // namespace

Tensor procedural_depth(int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw std::invalid_argument("procedural_depth: size must be positive");
  Rng rng(seed);
  Tensor d(Shape{1, 1, h, w});
  // Depth grows towards the top of the frame, tilted by a random angle.
  const double phi = uniform(rng, -0.6, 0.6);
  const double ax = std::sin(phi);
  const double ay = std::cos(phi);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      d.at(0, 0, y, x) = static_cast<Scalar>(ax * (static_cast<double>(x) / w - 0.5) +
                                            ay * (0.5 - static_cast<double>(y) / h));
    }
  }
  // Occluding planar regions (objects standing at their own depth).
  const int regions = std::uniform_int_distribution<int>(3, 6)(rng);
  for (int r = 0; r < regions; ++r) {
    const double cx = uniform(rng, 0.0, w);
    const double cy = uniform(rng, 0.0, h);
    const double rx = uniform(rng, 0.1, 0.35) * w;
    const double ry = uniform(rng, 0.1, 0.35) * h;
    const bool ellipse = uniform(rng, 0.0, 1.0) < 0.5;
    const double base = uniform(rng, -0.5, 0.5);
    const double gx = uniform(rng, -0.3, 0.3) / w;
    const double gy = uniform(rng, -0.3, 0.3) / h;
    for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(h, static_cast<int>(cy + ry) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(w, static_cast<int>(cx + rx) + 1); ++x) {
        const double u = (x - cx) / rx;
        const double v = (y - cy) / ry;
        if (ellipse && u * u + v * v > 1.0) continue;
        if (!ellipse && (std::abs(u) > 1.0 || std::abs(v) > 1.0)) continue;
        d.at(0, 0, y, x) = static_cast<Scalar>(base + gx * (x - cx) + gy * (y - cy));
      }
    }
  }
  const Tensor noise = smooth_noise(h, w, 4, 4, rng);
  for (std::size_t i = 0; i < d.numel(); ++i) d[i] += 0.15f * noise[i];
  d = box_filter(d, std::max(1, std::min(h, w) / 128));
  normalize_unit(d);
  return d;
}

Tensor procedural_scene(int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw std::invalid_argument("procedural_scene: size must be positive");
  Rng rng(seed);
  Tensor img(Shape{1, 3, h, w});
  const Tensor grain = smooth_noise(h, w, std::max(2, h / 3), std::max(2, w / 3), rng);
  const Tensor shade = smooth_noise(h, w, 3, 3, rng);

  // Muted palette skewed towards low saturation, with some pale
  // near-neutral surfaces (walls, sky), closer to photo statistics than
  // uniformly saturated colours.
  auto color = [&rng] {
    const double hue = uniform(rng, 0.0, 1.0);
    if (uniform(rng, 0.0, 1.0) < 0.12) {
      return hsv_to_rgb(hue, uniform(rng, 0.0, 0.12), uniform(rng, 0.65, 0.95));
    }
    const double sat = std::pow(uniform(rng, 0.0, 1.0), 1.5);
    const double val = uniform(rng, 0.08, 1.0);
    return hsv_to_rgb(hue, sat, val);
  };
  const auto bg = color();
  for (int c = 0; c < 3; ++c) std::fill_n(img.plane(0, c), img.shape().plane(), bg[c]);

  const double rmax = 0.35 * std::min(h, w);
  const double rmin = 2.0;
  const int shapes = std::max(20, static_cast<int>(0.004 * h * w));
  for (int s = 0; s < shapes; ++s) {
    // Log-uniform sizes, drawn large to small on average so small shapes
    // sit in front.
    const double frac = static_cast<double>(s) / shapes;
    const double u = std::clamp(frac + uniform(rng, -0.25, 0.25), 0.0, 1.0);
    const double r = rmax * std::pow(rmin / rmax, u);
    const double cx = uniform(rng, -0.1 * w, 1.1 * w);
    const double cy = uniform(rng, -0.1 * h, 1.1 * h);
    const double aspect = uniform(rng, 0.4, 2.5);
    const double rx = r * std::sqrt(aspect);
    const double ry = r / std::sqrt(aspect);
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const bool ellipse = uniform(rng, 0.0, 1.0) < 0.6;
    const auto col = color();
    const double gx = uniform(rng, -0.35, 0.35);
    const double gy = uniform(rng, -0.35, 0.35);
    const double texture = uniform(rng, 0.0, 0.12);
    const double extent = std::max(rx, ry);
    const int y0 = std::max(0, static_cast<int>(cy - extent));
    const int y1 = std::min(h - 1, static_cast<int>(cy + extent));
    const int x0 = std::max(0, static_cast<int>(cx - extent));
    const int x1 = std::min(w - 1, static_cast<int>(cx + extent));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double a = (ct * dx + st * dy) / rx;
        const double b = (-st * dx + ct * dy) / ry;
        if (ellipse ? a * a + b * b > 1.0 : (std::abs(a) > 1.0 || std::abs(b) > 1.0)) continue;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double gain = 1.0 + gx * a + gy * b + texture * grain[p];
        for (int c = 0; c < 3; ++c) img.plane(0, c)[p] = static_cast<Scalar>(col[c] * gain);
      }
    }
  }
  // Soft global illumination variation.
  for (int c = 0; c < 3; ++c) {
    Scalar* p = img.plane(0, c);
    for (std::size_t i = 0; i < img.shape().plane(); ++i) {
      p[i] = std::clamp(p[i] * (1.0f + 0.15f * shade[i]), Scalar{0}, Scalar{1});
    }
  }
  return img;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (!(beta_min >= 0.0f && beta_max >= beta_min)) {
    throw std::invalid_argument("synth: need 0 <= beta_min <= beta_max");
  }
  if (!(airlight_min >= 0.0f && airlight_max <= 1.0f && airlight_max >= airlight_min)) {
    throw std::invalid_argument("synth: airlight range must lie inside [0,1]");
  }
  if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction <= 1.0)) {
    throw std::invalid_argument("synth: split fractions must be nonnegative and sum to <= 1");
  }
  if (clear_dir.empty() && (procedural_count < 1 || height < 1 || width < 1)) {
    throw std::invalid_argument("synth: procedural mode needs a positive count and size");
  }
}

std::string SynthConfig::describe() const {
  std::ostringstream os;
  os << "clear=" << (clear_dir.empty() ? "procedural" : clear_dir);
  if (clear_dir.empty()) os << " count=" << procedural_count << " size=" << height << "x" << width;
  if (!depth_dir.empty()) os << " depth=" << depth_dir;
  os << " beta=[" << beta_min << "," << beta_max << "] A=[" << airlight_min << ","
     << airlight_max << "] val=" << val_fraction << " test=" << test_fraction
     << " seed=" << seed;
  return os.str();
}

std::string DatasetManifest::resolve(const std::string& path) const {
  const fs::path p(path);
  if (p.is_absolute() || root.empty()) return path;
  return (fs::path(root) / p).string();
}

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

namespace {

constexpr std::string_view kProcedural = "procedural:";

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

std::uint64_t procedural_seed(const std::string& depth) {
  return std::stoull(depth.substr(kProcedural.size()));
}

}  // namespace

Tensor DatasetManifest::load_depth(const ManifestEntry& e) const {
  if (e.depth.rfind(kProcedural, 0) == 0) {
    const Tensor clear = load_image(resolve(e.clear));
    return procedural_depth(clear.h(), clear.w(), procedural_seed(e.depth));
  }
  return load_gray(resolve(e.depth));
}

DatasetManifest synthesize_dataset(const SynthConfig& config, const std::string& out_dir) {
  config.validate();
  struct Source {
    std::string name;
    std::string clear_path;  // empty in procedural mode
    std::string depth_path;
  };
  std::vector<Source> sources;
  if (config.clear_dir.empty()) {
    for (int i = 0; i < config.procedural_count; ++i) {
      std::ostringstream name;
      name << "scene_" << std::setw(5) << std::setfill('0') << i;
      sources.push_back({name.str(), {}, {}});
    }
  } else {
    if (!fs::is_directory(config.clear_dir)) {
      throw std::runtime_error("synth: clear directory '" + config.clear_dir + "' does not exist");
    }
    for (const auto& entry : fs::directory_iterator(config.clear_dir)) {
      if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
      Source s{entry.path().stem().string(), fs::absolute(entry.path()).string(), {}};
      if (!config.depth_dir.empty()) {
        for (const char* ext : {".png", ".ppm"}) {
          const fs::path candidate = fs::path(config.depth_dir) / (s.name + ext);
          if (fs::exists(candidate)) {
            s.depth_path = fs::absolute(candidate).string();
            break;
          }
        }
      }
      sources.push_back(std::move(s));
    }
    if (sources.empty()) {
      throw std::runtime_error("synth: no PNG/PPM images in '" + config.clear_dir + "'");
    }
    std::sort(sources.begin(), sources.end(),
              [](const Source& a, const Source& b) { return a.name < b.name; });
  }

  fs::create_directories(fs::path(out_dir) / "hazy");
  fs::create_directories(fs::path(out_dir) / "trans");
  if (config.clear_dir.empty()) fs::create_directories(fs::path(out_dir) / "clear");

  const std::size_t n = sources.size();
  const auto n_test = static_cast<std::size_t>(std::llround(n * config.test_fraction));
  const auto n_val = static_cast<std::size_t>(std::llround(n * config.val_fraction));
  const std::size_t n_train = n - std::min(n, n_test + n_val);

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.entries.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const Source& src = sources[i];
    const std::uint64_t item_seed = mix_seed(config.seed, i);
    Rng rng(item_seed);
    ManifestEntry& e = manifest.entries[i];
    e.name = src.name;
    e.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");

    Tensor clear;
    if (src.clear_path.empty()) {
      clear = quantize8(procedural_scene(config.height, config.width, mix_seed(item_seed, 1)));
      e.clear = "clear/" + src.name + ".png";
      save_image(clear, manifest.resolve(e.clear));
    } else {
      clear = load_image(src.clear_path);
      e.clear = src.clear_path;
    }
    Tensor depth;
    if (!src.depth_path.empty()) {
      depth = load_gray(src.depth_path);
      if (!depth.shape().same_spatial(clear.shape())) {
        throw std::runtime_error("synth: depth map '" + src.depth_path + "' does not match '" +
                                 src.name + "'");
      }
      e.depth = src.depth_path;
    } else {
      const std::uint64_t depth_seed = mix_seed(item_seed, 2);
      depth = procedural_depth(clear.h(), clear.w(), depth_seed);
      e.depth = std::string(kProcedural) + std::to_string(depth_seed);
    }
    e.beta = static_cast<float>(uniform(rng, config.beta_min, config.beta_max));
    if (config.beta_max == config.beta_min) e.beta = config.beta_min;
    const Scalar a = static_cast<Scalar>(uniform(rng, config.airlight_min, config.airlight_max));
    e.airlight = gray_airlight(config.airlight_max == config.airlight_min ? config.airlight_min : a);

    const Tensor t = transmission_from_depth(depth, e.beta);
    const Tensor hazy = synthesize_hazy(clear, t, e.airlight);
    e.hazy = "hazy/" + src.name + ".png";
    e.transmission = "trans/" + src.name + ".png";
    save_image(hazy, manifest.resolve(e.hazy));
    save_image(t, manifest.resolve(e.transmission));
  });
  write_manifest(manifest, (fs::path(out_dir) / kManifestName).string());
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ostringstream os;
  os << "split\tname\tclear\thazy\ttransmission\tdepth\tbeta\tA_r\tA_g\tA_b\n";
  os << std::setprecision(9);
  for (const auto& e : manifest.entries) {
    os << e.split << '\t' << e.name << '\t' << e.clear << '\t' << e.hazy << '\t'
       << e.transmission << '\t' << e.depth << '\t' << e.beta << '\t' << e.airlight[0]
       << '\t' << e.airlight[1] << '\t' << e.airlight[2] << '\n';
  }
  write_file_atomic(path, os.str());
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  std::getline(in, line);
  if (line.rfind("split\tname\t", 0) != 0) {
    throw std::runtime_error("manifest '" + path + "': missing header");
  }
  std::map<std::string, std::string> split_of;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 10) {
      throw std::runtime_error("manifest '" + path + "' line " + std::to_string(line_no) +
                               ": expected 10 fields, got " + std::to_string(f.size()));
    }
    ManifestEntry e;
    e.split = f[0];
    e.name = f[1];
    e.clear = f[2];
    e.hazy = f[3];
    e.transmission = f[4];
    e.depth = f[5];
    try {
      e.beta = std::stof(f[6]);
      e.airlight = {std::stof(f[7]), std::stof(f[8]), std::stof(f[9])};
    } catch (const std::logic_error&) {
      throw std::runtime_error("manifest '" + path + "' line " + std::to_string(line_no) +
                               ": bad numeric field");
    }
    auto [it, inserted] = split_of.emplace(e.name, e.split);
    if (!inserted && it->second != e.split) {
      throw std::runtime_error("manifest '" + path + "': '" + e.name + "' appears in splits " +
                               it->second + " and " + e.split);
    }
    for (const std::string* p : {&e.clear, &e.hazy, &e.transmission}) {
      if (!fs::exists(m.resolve(*p))) {
        throw std::runtime_error("manifest '" + path + "': missing file " + m.resolve(*p));
      }
    }
    if (e.depth.rfind(kProcedural, 0) != 0 && !fs::exists(m.resolve(e.depth))) {
      throw std::runtime_error("manifest '" + path + "': missing depth file " + m.resolve(e.depth));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, const std::string& split) {
  std::vector<ImagePair> pairs;
  for (const ManifestEntry* e : manifest.split(split)) {
    pairs.push_back(ImagePair{e->name, load_image(manifest.resolve(e->hazy)),
                              load_image(manifest.resolve(e->clear))});
  }
  return pairs;
}

}  // namespace famed
