#pragma once

#include "famed/tensor.hpp"

namespace famed {

struct GuidedFilterParams {
  int radius = 48;
  Scalar eps = 1e-4f;
  int downsample = 4;

  void validate() const;
};

/// Mean over the (2r+1)^2 window clipped to the image, per plane. Uses
/// integral images, so the cost does not depend on the radius.
Tensor box_filter(const Tensor& map, int radius);

/// Gray-guide guided filter. `guide` has one channel (shared by every
/// channel of `src`) or as many channels as `src`.
Tensor guided_filter(const Tensor& guide, const Tensor& src, int radius, Scalar eps);

/// Computes the linear coefficients on a 1/d bilinear subsampling with
/// radius r/d, upsamples their window means and applies them to the
/// full-resolution guide. d = 1 runs exactly the guided_filter path.
Tensor fast_guided_filter(const Tensor& guide, const Tensor& src, int radius,
                          Scalar eps, int downsample);

inline Tensor fast_guided_filter(const Tensor& guide, const Tensor& src,
                                 const GuidedFilterParams& p) {
  return fast_guided_filter(guide, src, p.radius, p.eps, p.downsample);
}

}  // namespace famed
