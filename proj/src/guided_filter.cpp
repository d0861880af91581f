#include "famed/guided_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "famed/log.hpp"
#include "famed/ops.hpp"

namespace famed {

void GuidedFilterParams::validate() const {
  if (radius < 1) throw std::invalid_argument("guided filter radius must be >= 1");
  if (!(eps > 0.0f)) throw std::invalid_argument("guided filter eps must be positive");
  if (downsample < 1) throw std::invalid_argument("guided filter downsample must be >= 1");
}

Tensor box_filter(const Tensor& map, int radius) {
  if (radius < 1) {
    throw std::invalid_argument("box_filter: radius must be >= 1, got " +
                                std::to_string(radius));
  }
  const int H = map.h();
  const int W = map.w();
  const std::size_t stride = static_cast<std::size_t>(W) + 1;
  std::vector<double> integral((static_cast<std::size_t>(H) + 1) * stride);
  Tensor out(map.shape());
  for (int b = 0; b < map.n(); ++b) {
    for (int c = 0; c < map.c(); ++c) {
      const Scalar* s = map.plane(b, c);
      std::fill(integral.begin(), integral.begin() + static_cast<std::ptrdiff_t>(stride), 0.0);
      for (int y = 0; y < H; ++y) {
        double row = 0.0;
        double* cur = integral.data() + (y + 1) * stride;
        const double* prev = integral.data() + y * stride;
        cur[0] = 0.0;
        for (int x = 0; x < W; ++x) {
          row += s[static_cast<std::size_t>(y) * W + x];
          cur[x + 1] = prev[x + 1] + row;
        }
      }
      Scalar* d = out.plane(b, c);
      for (int y = 0; y < H; ++y) {
        const int y0 = std::max(0, y - radius);
        const int y1 = std::min(H - 1, y + radius) + 1;
        const double* top = integral.data() + y0 * stride;
        const double* bot = integral.data() + y1 * stride;
        for (int x = 0; x < W; ++x) {
          const int x0 = std::max(0, x - radius);
          const int x1 = std::min(W - 1, x + radius) + 1;
          const double sum = bot[x1] - bot[x0] - top[x1] + top[x0];
          const double count = static_cast<double>(y1 - y0) * (x1 - x0);
          d[static_cast<std::size_t>(y) * W + x] = static_cast<Scalar>(sum / count);
        }
      }
    }
  }
  return out;
}

namespace {

// Broadcasts a one-channel guide to `channels` channels.
Tensor expand_guide(const Tensor& guide, int channels) {
  if (guide.c() == channels) return guide;
  Tensor out(Shape{guide.n(), channels, guide.h(), guide.w()});
  for (int b = 0; b < guide.n(); ++b) {
    for (int c = 0; c < channels; ++c) {
      std::copy_n(guide.plane(b, 0), guide.shape().plane(), out.plane(b, c));
    }
  }
  return out;
}

void check_guide(const Tensor& guide, const Tensor& src, const char* what) {
  if (guide.n() != src.n() || !guide.shape().same_spatial(src.shape()) ||
      (guide.c() != 1 && guide.c() != src.c())) {
    throw std::invalid_argument(std::string(what) + ": guide " + guide.shape().str() +
                                " incompatible with source " + src.shape().str());
  }
  if (src.empty()) throw std::invalid_argument(std::string(what) + ": empty source");
}

int reduced(int size, int factor) {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(size) / factor)));
}

}  // namespace

Tensor fast_guided_filter(const Tensor& guide, const Tensor& src, int radius,
                          Scalar eps, int downsample) {
  check_guide(guide, src, "guided_filter");
  if (!(eps > 0.0f)) throw std::invalid_argument("guided_filter: eps must be positive");
  if (downsample < 1) throw std::invalid_argument("fast_guided_filter: downsample must be >= 1");
  if (radius < 1) throw std::invalid_argument("guided_filter: radius must be >= 1");

  int low_radius = radius / downsample;
  if (low_radius < 1) {
    log::warn("fast_guided_filter: radius " + std::to_string(radius) + " / " +
              std::to_string(downsample) + " < 1, using 1");
    low_radius = 1;
  }
  const int H = src.h();
  const int W = src.w();
  const int lh = downsample == 1 ? H : reduced(H, downsample);
  const int lw = downsample == 1 ? W : reduced(W, downsample);

  const Tensor full_guide = expand_guide(guide, src.c());
  const Tensor g = bilinear_resize(full_guide, lh, lw);
  const Tensor p = bilinear_resize(src, lh, lw);

  const std::size_t n = g.numel();
  Tensor gp(g.shape()), gg(g.shape());
  for (std::size_t i = 0; i < n; ++i) {
    gp[i] = g[i] * p[i];
    gg[i] = g[i] * g[i];
  }
  const Tensor mean_g = box_filter(g, low_radius);
  const Tensor mean_p = box_filter(p, low_radius);
  const Tensor corr_gp = box_filter(gp, low_radius);
  const Tensor corr_gg = box_filter(gg, low_radius);

  Tensor a(g.shape()), b(g.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar var = corr_gg[i] - mean_g[i] * mean_g[i];
    const Scalar cov = corr_gp[i] - mean_g[i] * mean_p[i];
    a[i] = cov / (var + eps);
    b[i] = mean_p[i] - a[i] * mean_g[i];
  }
  const Tensor mean_a = bilinear_resize(box_filter(a, low_radius), H, W);
  const Tensor mean_b = bilinear_resize(box_filter(b, low_radius), H, W);

  Tensor out(src.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = mean_a[i] * full_guide[i] + mean_b[i];
  }
  return out;
}

Tensor guided_filter(const Tensor& guide, const Tensor& src, int radius, Scalar eps) {
  return fast_guided_filter(guide, src, radius, eps, 1);
}

}  // namespace famed
