// Finite-difference probe over every layer type plus the SS-FD4 and GP-FD4
// networks on 2x3x16x16. Built against the double-precision library; the
// acceptance runner executes it and reads the exit status.

#include <cstdio>
#include <type_traits>

#include "layer_checks.hpp"

using namespace famed;
using namespace famed::test;

static_assert(std::is_same_v<Scalar, double>);

int main() {
  constexpr double kBound = 1e-3;
  double worst = 0.0;
  for (const auto& r : layer_gradient_checks()) {
    std::printf("layer %-24s max_rel_error %.3e\n", r.name.c_str(), r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  const std::pair<const char*, NetConfig> nets[] = {
      {"ss-fd4", NetConfig::single_scale(4)},
      {"gp-fd4", NetConfig::pyramid(Variant::GP, 3, 4)},
  };
  for (const auto& [name, cfg] : nets) {
    const GradientCheckReport rep = network_gradient_check(cfg, Mode::Train);
    std::size_t checked = 0;
    for (const auto& t : rep.tensors) checked += t.checked;
    std::printf("net   %-24s max_rel_error %.3e  checked %zu  skipped %zu  worst %s\n", name,
                rep.max_rel_error, checked, rep.skipped, rep.worst_tensor.c_str());
    worst = std::max(worst, rep.max_rel_error);
  }
  std::printf("overall max_rel_error %.3e\n", worst);
  return worst < kBound ? 0 : 1;
}
