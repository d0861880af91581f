#pragma once

#include <array>

#include "famed/tensor.hpp"

namespace famed {

/// Per-channel atmospheric light, each component in [0,1].
using Airlight = std::array<Scalar, 3>;

inline Airlight gray_airlight(Scalar a) { return {a, a, a}; }

/// Parameters of the homogeneous atmospheric scattering model.
struct HazeParams {
  Airlight airlight{1.0f, 1.0f, 1.0f};
  Scalar beta = 1.0f;  // scattering coefficient per unit depth
  Tensor depth;       // [n,1,h,w], nonnegative

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// t = exp(-beta * depth). depth is a [n,1,h,w] map.
Tensor transmission_from_depth(const Tensor& depth, Scalar beta);

/// I = J t + A (1 - t), t broadcast over the three channels of J.
Tensor synthesize_hazy(const Tensor& clear, const Tensor& transmission,
                       const Airlight& airlight);

Tensor synthesize_hazy(const Tensor& clear, const HazeParams& params);

/// The K map folding transmission and airlight into one variable, such that
/// J = K I - K + 1.
struct KMap {
  Tensor values;          // [n,3,h,w]
  Scalar eps_den = 1e-3f;  // clamp applied to |I - 1|
};

/// K = ((I - A)/t + (A - 1)) / (I - 1), with the denominator replaced by
/// sign(I-1) * max(|I-1|, eps_den).
KMap k_from_scene(const Tensor& hazy, const Tensor& transmission,
                  const Airlight& airlight, Scalar eps_den = 1e-3f);

/// J = K I - K + 1; clamped to [0,1] unless `clamp` is false.
Tensor recover_radiance(const Tensor& hazy, const Tensor& k, bool clamp = true);
inline Tensor recover_radiance(const Tensor& hazy, const KMap& k, bool clamp = true) {
  return recover_radiance(hazy, k.values, clamp);
}

/// Per pixel: min over channels, then min over a patch x patch window
/// (edge-clamped). Returns [n,1,h,w].
Tensor dark_channel(const Tensor& image, int patch);

/// Windowed minimum of a single-channel map (the second half of
/// dark_channel).
Tensor min_filter(const Tensor& map, int patch);

struct DcpParams {
  Scalar omega = 0.95f;
  int patch = 15;
  Scalar t_floor = 0.1f;
  Scalar top_fraction = 0.001f;  // brightest dark-channel pixels used for A
};

struct DcpResult {
  Tensor dehazed;       // [n,3,h,w] clamped to [0,1]
  Tensor transmission;  // [n,1,h,w], before the t_floor clamp
  std::vector<Airlight> airlight;  // one per batch item
};

/// Airlight estimate: among the brightest `top_fraction` dark-channel pixels,
/// the one with the highest intensity in the image. Falls back to the
/// per-channel image maximum when that estimate is degenerate (black).
Airlight estimate_airlight(const Tensor& image_item, const Tensor& dark_item,
                           Scalar top_fraction);

DcpResult dcp_baseline_dehaze(const Tensor& hazy, const DcpParams& params = {});

/// Luminance 0.299 R + 0.587 G + 0.114 B, [n,1,h,w].
Tensor luminance(const Tensor& rgb);

}  // namespace famed
