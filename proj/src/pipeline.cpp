#include "famed/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "famed/haze_model.hpp"
#include "famed/ops.hpp"

namespace famed {

std::pair<int, int> fit_longest_side(int h, int w, int longest) {
  if (h < 1 || w < 1 || longest < 1) {
    throw std::invalid_argument("fit_longest_side: sizes must be positive");
  }
  if (h >= w) {
    const int nw = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * longest / h)));
    return {longest, nw};
  }
  const int nh = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * longest / w)));
  return {nh, longest};
}

Tensor estimate_k(const Network& net, const Tensor& hazy, const DehazeOptions& options) {
  if (!net.has_weights()) throw std::logic_error("dehaze: network weights are not loaded");
  if (hazy.c() != 3) {
    throw std::invalid_argument("dehaze: expected a 3-channel image, got " + hazy.shape().str());
  }
  if (options.refine) options.refine->validate();
  const int H = hazy.h();
  const int W = hazy.w();
  Tensor k(hazy.shape());
  for (int b = 0; b < hazy.n(); ++b) {
    Tensor item = hazy.item(b);
    Tensor small = item;
    if (options.working_size > 0) {
      const auto [h, w] = fit_longest_side(H, W, options.working_size);
      small = bilinear_resize(item, h, w);
    }
    Tensor kb = bilinear_resize(net.infer(small).k_fusion, H, W);
    if (options.refine) kb = fast_guided_filter(luminance(item), kb, *options.refine);
    std::copy(kb.data().begin(), kb.data().end(), k.plane(b, 0));
  }
  return k;
}

Tensor dehaze_image(const Network& net, const Tensor& hazy, const DehazeOptions& options) {
  return recover_radiance(hazy, estimate_k(net, hazy, options), true);
}

}  // namespace famed
