#include <doctest.h>

#include <chrono>

#include "famed/dataset.hpp"
#include "famed/guided_filter.hpp"
#include "famed/haze_model.hpp"
#include "famed/ops.hpp"
#include "test_util.hpp"

using namespace famed;
using famed::test::random_tensor;

namespace {

// Naive window mean, in double, with its own count of in-bounds cells.
double naive_mean(const Tensor& m, int c, int y, int x, int r, int* count) {
  double s = 0.0;
  int n = 0;
  for (int yy = std::max(0, y - r); yy <= std::min(m.h() - 1, y + r); ++yy)
    for (int xx = std::max(0, x - r); xx <= std::min(m.w() - 1, x + r); ++xx) {
      s += m.at(0, c, yy, xx);
      ++n;
    }
  *count = n;
  return s / n;
}

}  // namespace

TEST_CASE("box filter") {
  SUBCASE("hand case") {
    const Tensor m = Tensor::from({1, 1, 1, 5}, {0, 0, 1, 0, 0});
    const Tensor b = box_filter(m, 1);
    const double want[] = {0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
    for (int i = 0; i < 5; ++i) CHECK(b[i] == doctest::Approx(want[i]).epsilon(1e-7));
  }
  SUBCASE("constant map") {
    const Tensor b = box_filter(Tensor(Shape{1, 2, 9, 7}, 0.3f), 4);
    for (float v : b.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-6));
  }
  SUBCASE("brute force on 17x13") {
    const Tensor m = random_tensor({1, 2, 17, 13}, 1, 0, 1);
    for (int r : {1, 2, 5, 20}) {
      const Tensor b = box_filter(m, r);
      double worst = 0.0;
      for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 17; ++y)
          for (int x = 0; x < 13; ++x) {
            int n = 0;
            const double mean = naive_mean(m, c, y, x, r, &n);
            worst = std::max(worst, std::abs(mean - b.at(0, c, y, x)));
          }
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("guided filter") {
  const Tensor g = random_tensor({1, 1, 20, 24}, 2, 0, 1);
  SUBCASE("self-guided with tiny eps is the identity") {
    CHECK(max_abs_diff(guided_filter(g, g, 3, 1e-8f), g) < 1e-3);
  }
  SUBCASE("constant guide: a = 0, output is the window mean of b = mean(src)") {
    const Tensor src = random_tensor({1, 1, 20, 24}, 3, 0, 1);
    const Tensor want = box_filter(box_filter(src, 3), 3);
    CHECK(max_abs_diff(guided_filter(Tensor(g.shape(), 0.4f), src, 3, 1e-4f), want) < 1e-6);
  }
  SUBCASE("exact on linear models") {
    Tensor src = g;
    for (auto& v : src.data()) v = 2.0f * v + 1.0f;
    CHECK(max_abs_diff(guided_filter(g, src, 4, 1e-8f), src) < 1e-4);
  }
  SUBCASE("bounded overshoot and finite output") {
    const Tensor src = random_tensor({1, 3, 20, 24}, 4, -1, 2);
    const Tensor out = guided_filter(g, src, 2, 1e-3f);
    CHECK(out.all_finite());
    const double span = src.max() - src.min();
    CHECK(out.min() >= src.min() - span);
    CHECK(out.max() <= src.max() + span);
  }
  SUBCASE("dims mismatch is rejected") {
    CHECK_THROWS_AS(guided_filter(g, Tensor(Shape{1, 1, 20, 23}), 2, 1e-4f), std::invalid_argument);
  }
}

TEST_CASE("fast guided filter") {
  const Tensor img = procedural_scene(128, 160, 5);
  const Tensor guide = luminance(img);
  SUBCASE("d = 1 is the exact filter") {
    const Tensor src = random_tensor({1, 3, 128, 160}, 6, 0, 1);
    CHECK(max_abs_diff(fast_guided_filter(guide, src, 8, 1e-4f, 1), guided_filter(guide, src, 8, 1e-4f)) == 0.0);
  }
  SUBCASE("constant source stays constant") {
    for (int d : {1, 2, 4}) {
      const Tensor out = fast_guided_filter(guide, Tensor(Shape{1, 1, 128, 160}, 0.7f), 16, 1e-4f, d);
      CHECK(std::abs(out.min() - 0.7f) < 1e-5f);
      CHECK(std::abs(out.max() - 0.7f) < 1e-5f);
    }
  }
  SUBCASE("d = 4 stays close to d = 1 on a K map") {
    const Tensor t = transmission_from_depth(procedural_depth(128, 160, 7), 1.2f);
    const Tensor hazy = synthesize_hazy(img, t, gray_airlight(0.85f));
    const Tensor k = k_from_scene(hazy, t, gray_airlight(0.85f)).values;
    const Tensor a = fast_guided_filter(luminance(hazy), k, 48, 1e-4f, 4);
    const Tensor b = fast_guided_filter(luminance(hazy), k, 48, 1e-4f, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(double(a[i]) - b[i]);
    CHECK(sum / a.numel() < 0.01);
  }
  SUBCASE("parameter validation") {
    GuidedFilterParams p;
    CHECK_NOTHROW(p.validate());
    p.eps = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}

TEST_CASE("fast path is faster on 1024x1024") {
  const Tensor guide = random_tensor({1, 1, 1024, 1024}, 8, 0, 1);
  const Tensor src = random_tensor({1, 1, 1024, 1024}, 9, 0, 1);
  auto time = [&](int d) {
    double best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor out = fast_guided_filter(guide, src, 48, 1e-4f, d);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      CHECK(out.numel() == src.numel());
    }
    return best;
  };
  CHECK(time(1) / time(4) >= 4.0);
}
