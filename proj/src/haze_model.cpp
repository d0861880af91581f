#include "famed/haze_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace famed {

namespace {

void check_airlight(const Airlight& a) {
  for (Scalar v : a) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::invalid_argument("airlight components must lie in [0,1], got " +
                                  std::to_string(v));
    }
  }
}

void check_map_for(const Tensor& image, const Tensor& map, const char* what) {
  if (map.c() != 1 || map.n() != image.n() || !map.shape().same_spatial(image.shape())) {
    throw std::invalid_argument(std::string(what) + ": map " + map.shape().str() +
                                " does not match image " + image.shape().str());
  }
}

void check_rgb(const Tensor& image, const char* what) {
  if (image.c() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected 3 channels, got " +
                                image.shape().str());
  }
}

}  // namespace

void HazeParams::validate() const {
  check_airlight(airlight);
  if (!(beta >= 0.0f)) throw std::invalid_argument("beta must be nonnegative");
  if (depth.c() != 1) throw std::invalid_argument("depth must be single-channel");
  if (!depth.empty() && !(depth.min() >= 0.0f)) {
    throw std::invalid_argument("depth values must be nonnegative");
  }
}

Tensor transmission_from_depth(const Tensor& depth, Scalar beta) {
  if (!(beta >= 0.0f)) {
    throw std::invalid_argument("transmission_from_depth: negative beta");
  }
  Tensor t(depth.shape());
  for (std::size_t i = 0; i < depth.numel(); ++i) {
    if (!(depth[i] >= 0.0f)) {
      throw std::invalid_argument("transmission_from_depth: negative depth value");
    }
    t[i] = static_cast<Scalar>(std::exp(-static_cast<double>(beta) * depth[i]));
  }
  return t;
}

Tensor synthesize_hazy(const Tensor& clear, const Tensor& transmission,
                       const Airlight& airlight) {
  check_rgb(clear, "synthesize_hazy");
  check_map_for(clear, transmission, "synthesize_hazy");
  check_airlight(airlight);
  Tensor out(clear.shape());
  const std::size_t hw = clear.shape().plane();
  for (int b = 0; b < clear.n(); ++b) {
    const Scalar* t = transmission.plane(b, 0);
    for (int c = 0; c < 3; ++c) {
      const Scalar* j = clear.plane(b, c);
      Scalar* o = out.plane(b, c);
      const Scalar a = airlight[c];
      for (std::size_t p = 0; p < hw; ++p) o[p] = j[p] * t[p] + a * (1.0f - t[p]);
    }
  }
  return out;
}

Tensor synthesize_hazy(const Tensor& clear, const HazeParams& params) {
  params.validate();
  return synthesize_hazy(clear, transmission_from_depth(params.depth, params.beta),
                         params.airlight);
}

KMap k_from_scene(const Tensor& hazy, const Tensor& transmission,
                  const Airlight& airlight, Scalar eps_den) {
  check_rgb(hazy, "k_from_scene");
  check_map_for(hazy, transmission, "k_from_scene");
  if (!(eps_den > 0.0f)) throw std::invalid_argument("k_from_scene: eps_den must be positive");
  KMap k{Tensor(hazy.shape()), eps_den};
  const std::size_t hw = hazy.shape().plane();
  for (int b = 0; b < hazy.n(); ++b) {
    const Scalar* t = transmission.plane(b, 0);
    for (int c = 0; c < 3; ++c) {
      const double a = airlight[c];
      const Scalar* i = hazy.plane(b, c);
      Scalar* kv = k.values.plane(b, c);
      for (std::size_t p = 0; p < hw; ++p) {
        if (!(t[p] > 0.0f)) {
          throw std::invalid_argument("k_from_scene: transmission must be positive everywhere");
        }
        const double diff = static_cast<double>(i[p]) - 1.0;
        const double mag = std::max(std::abs(diff), static_cast<double>(eps_den));
        const double den = diff < 0.0 ? -mag : mag;
        const double num = (i[p] - a) / t[p] + (a - 1.0);
        kv[p] = static_cast<Scalar>(num / den);
      }
    }
  }
  return k;
}

Tensor recover_radiance(const Tensor& hazy, const Tensor& k, bool clamp) {
  require_same_shape(hazy.shape(), k.shape(), "recover_radiance");
  Tensor j(hazy.shape());
  for (std::size_t p = 0; p < hazy.numel(); ++p) {
    Scalar v = k[p] * hazy[p] - k[p] + 1.0f;
    if (clamp) v = std::clamp(v, Scalar{0}, Scalar{1});
    j[p] = v;
  }
  return j;
}

Tensor min_filter(const Tensor& map, int patch) {
  if (patch < 1 || patch % 2 == 0) {
    throw std::invalid_argument("min_filter: patch must be a positive odd integer, got " +
                                std::to_string(patch));
  }
  const int H = map.h();
  const int W = map.w();
  const int pad = patch / 2;
  Tensor out(map.shape());
  std::vector<Scalar> rows(map.shape().plane());
  for (int b = 0; b < map.n(); ++b) {
    for (int c = 0; c < map.c(); ++c) {
      const Scalar* s = map.plane(b, c);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          Scalar m = s[static_cast<std::size_t>(y) * W + std::max(0, x - pad)];
          for (int k = std::max(0, x - pad) + 1; k <= std::min(W - 1, x + pad); ++k) {
            m = std::min(m, s[static_cast<std::size_t>(y) * W + k]);
          }
          rows[static_cast<std::size_t>(y) * W + x] = m;
        }
      }
      Scalar* d = out.plane(b, c);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          Scalar m = rows[static_cast<std::size_t>(std::max(0, y - pad)) * W + x];
          for (int k = std::max(0, y - pad) + 1; k <= std::min(H - 1, y + pad); ++k) {
            m = std::min(m, rows[static_cast<std::size_t>(k) * W + x]);
          }
          d[static_cast<std::size_t>(y) * W + x] = m;
        }
      }
    }
  }
  return out;
}

Tensor dark_channel(const Tensor& image, int patch) {
  if (patch < 1 || patch % 2 == 0) {
    throw std::invalid_argument("dark_channel: patch must be a positive odd integer, got " +
                                std::to_string(patch));
  }
  if (image.c() < 1) throw std::invalid_argument("dark_channel: image has no channels");
  Tensor channel_min(Shape{image.n(), 1, image.h(), image.w()});
  const std::size_t hw = image.shape().plane();
  for (int b = 0; b < image.n(); ++b) {
    Scalar* d = channel_min.plane(b, 0);
    std::copy_n(image.plane(b, 0), hw, d);
    for (int c = 1; c < image.c(); ++c) {
      const Scalar* s = image.plane(b, c);
      for (std::size_t p = 0; p < hw; ++p) d[p] = std::min(d[p], s[p]);
    }
  }
  return min_filter(channel_min, patch);
}

Tensor luminance(const Tensor& rgb) {
  check_rgb(rgb, "luminance");
  Tensor y(Shape{rgb.n(), 1, rgb.h(), rgb.w()});
  const std::size_t hw = rgb.shape().plane();
  for (int b = 0; b < rgb.n(); ++b) {
    const Scalar* r = rgb.plane(b, 0);
    const Scalar* g = rgb.plane(b, 1);
    const Scalar* bl = rgb.plane(b, 2);
    Scalar* d = y.plane(b, 0);
    for (std::size_t p = 0; p < hw; ++p) d[p] = 0.299f * r[p] + 0.587f * g[p] + 0.114f * bl[p];
  }
  return y;
}

Airlight estimate_airlight(const Tensor& image_item, const Tensor& dark_item,
                           Scalar top_fraction) {
  const std::size_t hw = image_item.shape().plane();
  const std::size_t top = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(static_cast<double>(hw) * top_fraction)));
  std::vector<std::size_t> order(hw);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Scalar* dc = dark_item.plane(0, 0);
  // Stable selection so ties resolve to the earliest pixel.
  std::stable_sort(order.begin(), order.end(),
                   [dc](std::size_t a, std::size_t b) { return dc[a] > dc[b]; });
  const Scalar* r = image_item.plane(0, 0);
  const Scalar* g = image_item.plane(0, 1);
  const Scalar* bl = image_item.plane(0, 2);
  std::size_t best = order[0];
  Scalar best_intensity = -1.0f;
  for (std::size_t k = 0; k < top; ++k) {
    const std::size_t p = order[k];
    const Scalar intensity = r[p] + g[p] + bl[p];
    if (intensity > best_intensity) {
      best_intensity = intensity;
      best = p;
    }
  }
  Airlight a{r[best], g[best], bl[best]};
  constexpr Scalar kDegenerate = 1e-6f;
  if (std::min({a[0], a[1], a[2]}) <= kDegenerate) {
    for (int c = 0; c < 3; ++c) {
      const Scalar* s = image_item.plane(0, c);
      a[c] = *std::max_element(s, s + hw);
    }
  }
  for (Scalar& v : a) v = std::clamp(v, kDegenerate, Scalar{1});
  return a;
}

DcpResult dcp_baseline_dehaze(const Tensor& hazy, const DcpParams& params) {
  check_rgb(hazy, "dcp_baseline_dehaze");
  if (!(params.omega > 0.0f && params.omega <= 1.0f)) {
    throw std::invalid_argument("dcp_baseline_dehaze: omega must lie in (0,1]");
  }
  if (!(params.t_floor > 0.0f && params.t_floor < 1.0f)) {
    throw std::invalid_argument("dcp_baseline_dehaze: t_floor must lie in (0,1)");
  }
  DcpResult result;
  result.dehazed = Tensor(hazy.shape());
  result.transmission = Tensor(Shape{hazy.n(), 1, hazy.h(), hazy.w()});
  const std::size_t hw = hazy.shape().plane();
  for (int b = 0; b < hazy.n(); ++b) {
    const Tensor item = hazy.item(b);
    const Tensor dark = dark_channel(item, params.patch);
    const Airlight a = estimate_airlight(item, dark, params.top_fraction);
    result.airlight.push_back(a);

    Tensor normalized(item.shape());
    for (int c = 0; c < 3; ++c) {
      const Scalar* s = item.plane(0, c);
      Scalar* d = normalized.plane(0, c);
      for (std::size_t p = 0; p < hw; ++p) d[p] = s[p] / a[c];
    }
    const Tensor dark_norm = dark_channel(normalized, params.patch);
    Scalar* t = result.transmission.plane(b, 0);
    for (std::size_t p = 0; p < hw; ++p) t[p] = 1.0f - params.omega * dark_norm[p];
    for (int c = 0; c < 3; ++c) {
      const Scalar* s = item.plane(0, c);
      Scalar* d = result.dehazed.plane(b, c);
      for (std::size_t p = 0; p < hw; ++p) {
        const Scalar tt = std::max(t[p], params.t_floor);
        d[p] = std::clamp((s[p] - a[c]) / tt + a[c], Scalar{0}, Scalar{1});
      }
    }
  }
  return result;
}

}  // namespace famed
