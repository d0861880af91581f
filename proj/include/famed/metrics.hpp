#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "famed/tensor.hpp"

namespace famed {

/// Returned by psnr when the images are identical (MSE = 0).
inline constexpr double kIdenticalPsnr = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE), MSE over every value of both tensors.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean local SSIM of the luminance (RGB inputs) or of the single channel,
/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1,
/// averaged over valid window positions and batch items. Images smaller
/// than the window use the largest odd window that fits.
double ssim(const Tensor& a, const Tensor& b);

/// Histogram with normalized frequencies and the cumulative distribution.
struct HistogramTable {
  std::vector<double> bin_centers;
  std::vector<std::uint64_t> counts;
  std::vector<double> frequency;
  std::vector<double> cumulative;

  static HistogramTable from_counts(std::vector<double> centers,
                                    std::vector<std::uint64_t> counts);
  std::uint64_t total() const;
  /// Frequency mass in the first `bins` bins.
  double mass_below(std::size_t bins) const;
  /// Two-column "center frequency" text (gnuplot-compatible).
  std::string to_text() const;
  /// bin_center,count,frequency,cumulative
  std::string to_csv() const;
};

struct DepthStatsOptions {
  int patch = 128;
  int levels = 10;
  int stride = 32;  // grid of patch origins
};

/// Quantizes each depth map into `levels` uniform levels between its own
/// min and max, counts the distinct levels inside every patch of a strided
/// grid, and histograms those counts (bins 1..levels).
HistogramTable depth_level_stats(const std::vector<Tensor>& depth_maps,
                                 const DepthStatsOptions& options = {});

enum class RegularityQuantity { DarkChannel, OneMinusT, OneMinusInvKhat };

/// Maps a [1,3,h,w] image to a transmission map [1,1,h,w] (OneMinusT) or a
/// K map [1,3,h,w] (OneMinusInvKhat). Unused for DarkChannel.
using MapProvider = std::function<Tensor(const Tensor&)>;

/// Per non-overlapping patch x patch tile of each image: the dark channel
/// (min over channels and tile), the tile mean of 1 - t, or 1 - 1/K_hat with
/// K_hat the tile mean of the channel-averaged K. Values are clamped to
/// [0,1] and binned into `bins` uniform bins.
HistogramTable regularity_histogram(const std::vector<Tensor>& images,
                                    RegularityQuantity quantity,
                                    const MapProvider& provider = {}, int patch = 7,
                                    int bins = 20);

struct EvalRow {
  std::string name;
  std::string subset;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  void add(std::string name, std::string subset, const Tensor& prediction,
           const Tensor& target);
  /// Means over rows (optionally only one subset). An identical row makes
  /// the PSNR mean infinite.
  double mean_psnr(const std::string& subset = {}) const;
  double mean_ssim(const std::string& subset = {}) const;
  /// name,subset,psnr,ssim with "identical" for infinite PSNR, then mean rows.
  std::string to_csv() const;
};

std::string format_psnr(double db);

}  // namespace famed
