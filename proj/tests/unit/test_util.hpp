#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "famed/tensor.hpp"

namespace famed::test {

inline Tensor random_tensor(Shape s, std::uint64_t seed, Scalar lo = -1, Scalar hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Scalar objective sum(out * r) in double.
inline double weighted_sum(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += static_cast<double>(out[i]) * r[i];
  return s;
}

// Central differences of f with respect to every value of x; returns the
// worst relative error against `analytic` (denominator floored at `floor`).
inline double fd_max_rel_error(Tensor& x, const std::function<double()>& f,
                               std::span<const Scalar> analytic, double step = 1e-3,
                               double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const Scalar orig = x[i];
    const Scalar plus = orig + static_cast<Scalar>(step);
    const Scalar minus = orig - static_cast<Scalar>(step);
    x[i] = plus;
    const double fp = f();
    x[i] = minus;
    const double fm = f();
    x[i] = orig;
    const double numeric = (fp - fm) / (static_cast<double>(plus) - minus);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, err);
  }
  return worst;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("famed_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace famed::test
