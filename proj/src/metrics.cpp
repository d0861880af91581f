#include "famed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "famed/haze_model.hpp"

namespace famed {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  if (a.numel() == 0) throw std::invalid_argument("psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.numel());
  if (mse == 0.0) return kIdenticalPsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable 'valid' correlation of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

double ssim_plane(const Scalar* pa, const Scalar* pb, int h, int w) {
  int size = std::min({11, h, w});
  if (size % 2 == 0) --size;
  const auto k = gaussian_window(size, 1.5);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> a(pa, pa + hw), b(pb, pb + hw), aa(hw), bb(hw), ab(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, k);
  const auto mu_b = filter_valid(b, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (a.c() != 1 && a.c() != 3) throw std::invalid_argument("ssim: expected 1 or 3 channels");
  if (a.h() < 1 || a.w() < 1 || a.n() < 1) throw std::invalid_argument("ssim: empty images");
  const Tensor ga = a.c() == 3 ? luminance(a) : a;
  const Tensor gb = b.c() == 3 ? luminance(b) : b;
  double sum = 0.0;
  for (int n = 0; n < a.n(); ++n) sum += ssim_plane(ga.plane(n, 0), gb.plane(n, 0), a.h(), a.w());
  return sum / a.n();
}

// ---------------------------------------------------------------------------

HistogramTable HistogramTable::from_counts(std::vector<double> centers,
                                           std::vector<std::uint64_t> counts) {
  if (centers.size() != counts.size()) {
    throw std::invalid_argument("histogram: centers and counts differ in length");
  }
  HistogramTable t;
  t.bin_centers = std::move(centers);
  t.counts = std::move(counts);
  const std::uint64_t total = t.total();
  t.frequency.resize(t.counts.size());
  t.cumulative.resize(t.counts.size());
  std::uint64_t running = 0;
  for (std::size_t i = 0; i < t.counts.size(); ++i) {
    running += t.counts[i];
    t.frequency[i] = total ? static_cast<double>(t.counts[i]) / total : 0.0;
    t.cumulative[i] = total ? static_cast<double>(running) / total : 0.0;
  }
  return t;
}

std::uint64_t HistogramTable::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

double HistogramTable::mass_below(std::size_t bins) const {
  if (bins == 0 || cumulative.empty()) return 0.0;
  return cumulative[std::min(bins, cumulative.size()) - 1];
}

std::string HistogramTable::to_text() const {
  std::ostringstream os;
  os << std::setprecision(8);
  for (std::size_t i = 0; i < bin_centers.size(); ++i) {
    os << bin_centers[i] << ' ' << frequency[i] << '\n';
  }
  return os.str();
}

std::string HistogramTable::to_csv() const {
  std::ostringstream os;
  os << "bin_center,count,frequency,cumulative\n" << std::setprecision(8);
  for (std::size_t i = 0; i < bin_centers.size(); ++i) {
    os << bin_centers[i] << ',' << counts[i] << ',' << frequency[i] << ',' << cumulative[i]
       << '\n';
  }
  return os.str();
}

HistogramTable depth_level_stats(const std::vector<Tensor>& depth_maps,
                                 const DepthStatsOptions& options) {
  if (options.levels < 1 || options.patch < 1 || options.stride < 1) {
    throw std::invalid_argument("depth_level_stats: patch, levels and stride must be positive");
  }
  std::vector<std::uint64_t> counts(options.levels, 0);
  for (const Tensor& d : depth_maps) {
    if (d.c() != 1) throw std::invalid_argument("depth_level_stats: depth maps must be single-channel");
    if (d.h() < options.patch || d.w() < options.patch) {
      throw std::invalid_argument("depth_level_stats: depth map " + d.shape().str() +
                                  " smaller than the patch");
    }
    for (int b = 0; b < d.n(); ++b) {
      const Scalar* p = d.plane(b, 0);
      const std::size_t hw = d.shape().plane();
      const Scalar lo = *std::min_element(p, p + hw);
      const Scalar hi = *std::max_element(p, p + hw);
      std::vector<std::uint8_t> level(hw, 0);
      if (hi > lo) {
        for (std::size_t i = 0; i < hw; ++i) {
          const double u = (static_cast<double>(p[i]) - lo) / (static_cast<double>(hi) - lo);
          level[i] = static_cast<std::uint8_t>(
              std::min(options.levels - 1, static_cast<int>(u * options.levels)));
        }
      }
      for (int y0 = 0; y0 + options.patch <= d.h(); y0 += options.stride) {
        for (int x0 = 0; x0 + options.patch <= d.w(); x0 += options.stride) {
          std::vector<bool> seen(options.levels, false);
          int distinct = 0;
          for (int y = y0; y < y0 + options.patch; ++y) {
            const std::uint8_t* row = level.data() + static_cast<std::size_t>(y) * d.w();
            for (int x = x0; x < x0 + options.patch; ++x) {
              if (!seen[row[x]]) {
                seen[row[x]] = true;
                ++distinct;
              }
            }
          }
          ++counts[distinct - 1];
        }
      }
    }
  }
  std::vector<double> centers(options.levels);
  for (int i = 0; i < options.levels; ++i) centers[i] = i + 1;
  return HistogramTable::from_counts(std::move(centers), std::move(counts));
}

HistogramTable regularity_histogram(const std::vector<Tensor>& images,
                                    RegularityQuantity quantity, const MapProvider& provider,
                                    int patch, int bins) {
  if (patch < 1 || bins < 1) throw std::invalid_argument("regularity_histogram: bad patch/bins");
  if (quantity != RegularityQuantity::DarkChannel && !provider) {
    throw std::invalid_argument("regularity_histogram: this quantity needs a map provider");
  }
  std::vector<std::uint64_t> counts(bins, 0);
  auto add = [&](double v) {
    v = std::clamp(v, 0.0, 1.0);
    const int bin = std::min(bins - 1, static_cast<int>(v * bins));
    ++counts[bin];
  };
  for (const Tensor& image : images) {
    if (image.n() != 1 || image.c() != 3) {
      throw std::invalid_argument("regularity_histogram: images must be [1,3,h,w], got " +
                                  image.shape().str());
    }
    const int H = image.h();
    const int W = image.w();
    Tensor map;
    if (quantity == RegularityQuantity::OneMinusT) {
      map = provider(image);
      if (!(map.shape() == Shape{1, 1, H, W})) {
        throw std::invalid_argument("regularity_histogram: transmission provider returned " +
                                    map.shape().str() + " for image " + image.shape().str());
      }
    } else if (quantity == RegularityQuantity::OneMinusInvKhat) {
      map = provider(image);
      if (!(map.shape() == Shape{1, 3, H, W})) {
        throw std::invalid_argument("regularity_histogram: K provider returned " +
                                    map.shape().str() + " for image " + image.shape().str());
      }
    }
    for (int y0 = 0; y0 + patch <= H; y0 += patch) {
      for (int x0 = 0; x0 + patch <= W; x0 += patch) {
        double acc = quantity == RegularityQuantity::DarkChannel ? 1e30 : 0.0;
        for (int y = y0; y < y0 + patch; ++y) {
          for (int x = x0; x < x0 + patch; ++x) {
            switch (quantity) {
              case RegularityQuantity::DarkChannel:
                for (int c = 0; c < 3; ++c) acc = std::min<double>(acc, image.at(0, c, y, x));
                break;
              case RegularityQuantity::OneMinusT:
                acc += 1.0 - map.at(0, 0, y, x);
                break;
              case RegularityQuantity::OneMinusInvKhat:
                acc += (static_cast<double>(map.at(0, 0, y, x)) + map.at(0, 1, y, x) +
                        map.at(0, 2, y, x)) / 3.0;
                break;
            }
          }
        }
        const double area = static_cast<double>(patch) * patch;
        switch (quantity) {
          case RegularityQuantity::DarkChannel: add(acc); break;
          case RegularityQuantity::OneMinusT: add(acc / area); break;
          case RegularityQuantity::OneMinusInvKhat: {
            const double khat = acc / area;
            add(khat > 0.0 ? 1.0 - 1.0 / khat : 0.0);
            break;
          }
        }
      }
    }
  }
  std::vector<double> centers(bins);
  for (int i = 0; i < bins; ++i) centers[i] = (i + 0.5) / bins;
  return HistogramTable::from_counts(std::move(centers), std::move(counts));
}

// ---------------------------------------------------------------------------

std::string format_psnr(double db) {
  if (std::isinf(db) && db > 0) return "identical";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << db;
  return os.str();
}

void EvalReport::add(std::string name, std::string subset, const Tensor& prediction,
                     const Tensor& target) {
  rows.push_back(EvalRow{std::move(name), std::move(subset), psnr(prediction, target),
                         ssim(prediction, target)});
}

double EvalReport::mean_psnr(const std::string& subset) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (!subset.empty() && r.subset != subset) continue;
    s += r.psnr;
    ++n;
  }
  return n ? s / n : 0.0;
}

double EvalReport::mean_ssim(const std::string& subset) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (!subset.empty() && r.subset != subset) continue;
    s += r.ssim;
    ++n;
  }
  return n ? s / n : 0.0;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "name,subset,psnr,ssim\n";
  std::set<std::string> subsets;
  for (const auto& r : rows) {
    os << r.name << ',' << r.subset << ',' << format_psnr(r.psnr) << ',' << std::fixed
       << std::setprecision(6) << r.ssim << '\n';
    os.unsetf(std::ios::floatfield);
    if (!r.subset.empty()) subsets.insert(r.subset);
  }
  for (const auto& s : subsets) {
    os << "mean," << s << ',' << format_psnr(mean_psnr(s)) << ',' << std::fixed
       << std::setprecision(6) << mean_ssim(s) << '\n';
    os.unsetf(std::ios::floatfield);
  }
  os << "mean,all," << format_psnr(mean_psnr()) << ',' << std::fixed << std::setprecision(6)
     << mean_ssim() << '\n';
  return os.str();
}

}  // namespace famed
