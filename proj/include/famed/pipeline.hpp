#pragma once

#include <optional>

#include "famed/guided_filter.hpp"
#include "famed/network.hpp"

namespace famed {

struct DehazeOptions {
  /// Longest side the network sees; 0 runs at the native resolution.
  int working_size = 360;
  /// Guided-filter refinement of the upsampled K map; disabled when empty.
  std::optional<GuidedFilterParams> refine = GuidedFilterParams{};
};

/// Size of an h x w image after scaling its longest side to `longest`
/// (aspect preserved, short side rounded to nearest, at least 1).
std::pair<int, int> fit_longest_side(int h, int w, int longest);

/// Fixed-size inference: resize to the working size, predict K, upsample K
/// to the input size, refine each K channel with the fast guided filter
/// (gray guide), recover J and clamp to [0,1]. Batch items are processed
/// independently.
Tensor dehaze_image(const Network& net, const Tensor& hazy,
                    const DehazeOptions& options = {});

/// The refined full-resolution K map used by dehaze_image.
Tensor estimate_k(const Network& net, const Tensor& hazy,
                  const DehazeOptions& options = {});

}  // namespace famed
