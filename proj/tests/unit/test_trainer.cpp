#include <doctest.h>

#include <cmath>
#include <vector>

#include "famed/dataset.hpp"
#include "famed/haze_model.hpp"
#include "famed/ops.hpp"
#include "famed/trainer.hpp"
#include "test_util.hpp"

using namespace famed;
using famed::test::fd_max_rel_error;
using famed::test::random_tensor;

namespace {

std::vector<ImagePair> tiny_dataset(int count, int size) {
  std::vector<ImagePair> pairs;
  for (int i = 0; i < count; ++i) {
    ImagePair p;
    p.name = "img" + std::to_string(i);
    p.clear = procedural_scene(size, size, 100 + i);
    const Tensor t = transmission_from_depth(procedural_depth(size, size, 200 + i), 1.2f);
    p.hazy = synthesize_hazy(p.clear, t, gray_airlight(0.85f));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

TrainConfig quick_config(std::int64_t iters) {
  TrainConfig c;
  c.batch_size = 4;
  c.crop = 24;
  c.lr0 = 0.05;
  c.total_iters = iters;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("l2 loss") {
  CHECK(l2_loss(Tensor(Shape{1, 3, 2, 2}, 0.3f), Tensor(Shape{1, 3, 2, 2}, 0.3f)).value == 0.0);
  const L2Result r = l2_loss(Tensor(Shape{1, 1, 2, 2}, 0.0f), Tensor(Shape{1, 1, 2, 2}, 1.0f));
  CHECK(r.value == 1.0);
  for (float g : r.grad.data()) CHECK(g == -0.5f);
  // Quadratic: central differences are exact, so the 1e-6 bound holds in float.
  Tensor pred = random_tensor({2, 3, 3, 3}, 1, 0, 1);
  const Tensor gt = random_tensor({2, 3, 3, 3}, 2, 0, 1);
  const L2Result l = l2_loss(pred, gt);
  CHECK(fd_max_rel_error(pred, [&] { return l2_loss(pred, gt).value; }, l.grad.data(), 0.25) < 1e-6);
  CHECK_THROWS_AS(l2_loss(Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 2, 3})), std::invalid_argument);
}

TEST_CASE("multi-scale loss reductions") {
  const Tensor gt = random_tensor({2, 3, 16, 16}, 3, 0, 1);
  SUBCASE("single scale is twice the MSE") {
    NetOutputs o;
    o.j = {random_tensor({2, 3, 16, 16}, 4, 0, 1)};
    o.j_fusion = o.j[0];
    const LossResult r = multiscale_loss(o, gt, {1.0}, 1.0);
    CHECK(r.value == doctest::Approx(2.0 * l2_loss(o.j[0], gt).value).epsilon(1e-12));
  }
  SUBCASE("perfect predictions at every scale") {
    NetOutputs o;
    o.j = {gt, bilinear_resize(gt, 8, 8), bilinear_resize(gt, 4, 4)};
    o.j_fusion = gt;
    CHECK(multiscale_loss(o, gt, {1.0, 1.0, 1.0}, 1.0).value == 0.0);
  }
  SUBCASE("only the fusion term") {
    NetOutputs o;
    o.j = {random_tensor({2, 3, 16, 16}, 5, 0, 1), random_tensor({2, 3, 8, 8}, 6, 0, 1),
           random_tensor({2, 3, 4, 4}, 7, 0, 1)};
    o.j_fusion = random_tensor({2, 3, 16, 16}, 8, 0, 1);
    const LossResult r = multiscale_loss(o, gt, {0.0, 0.0, 0.0}, 1.0);
    CHECK(r.value == l2_loss(o.j_fusion, gt).value);
  }
  SUBCASE("missing scale output is rejected") {
    NetOutputs o;
    o.j = {gt, Tensor(), bilinear_resize(gt, 4, 4)};
    o.j_fusion = gt;
    CHECK_THROWS_AS(multiscale_loss(o, gt, {1.0, 1.0, 1.0}, 1.0), std::invalid_argument);
    o.j = {gt};
    o.j_fusion = Tensor();
    CHECK_THROWS_AS(multiscale_loss(o, gt, {1.0}, 1.0), std::invalid_argument);
  }
}

TEST_CASE("sgd step") {
  WeightStore s;
  const std::size_t w = s.add("w", ParamKind::ConvWeight, Shape{1, 1, 1, 2});
  const std::size_t b = s.add("b", ParamKind::ConvBias, Shape{1, 1, 1, 1});
  const std::size_t m = s.add("m", ParamKind::BnRunningMean, Shape{1, 1, 1, 1});
  s[w].value = Tensor::from({1, 1, 1, 2}, {1.0f, -2.0f});
  s[b].value = Tensor::from({1, 1, 1, 1}, {0.5f});
  s[m].value = Tensor::from({1, 1, 1, 1}, {0.25f});

  SUBCASE("zero gradient, no decay: unchanged") {
    OptimizerState st;
    sgd_step(s, st, 0.1, 0.9, 0.0);
    CHECK(s[w].value[0] == 1.0f);
    CHECK(s[b].value[0] == 0.5f);
  }
  SUBCASE("plain gradient descent") {
    OptimizerState st;
    s[w].grad = {2.0f, 4.0f};
    s[b].grad = {1.0f};
    sgd_step(s, st, 0.5, 0.0, 0.0);
    CHECK(s[w].value[0] == 0.0f);
    CHECK(s[w].value[1] == -4.0f);
    CHECK(s[b].value[0] == 0.0f);
    CHECK(s[m].value[0] == 0.25f);
  }
  SUBCASE("two momentum steps, hand-unrolled") {
    // v1 = -g, w1 = w0 - g; v2 = 0.9 v1 - g = -1.9 g, w2 = w0 - 2.9 g
    OptimizerState st;
    s[w].grad = {1.0f, 0.5f};
    s[b].grad = {0.0f};
    sgd_step(s, st, 1.0, 0.9, 0.0);
    sgd_step(s, st, 1.0, 0.9, 0.0);
    CHECK(s[w].value[0] == doctest::Approx(1.0 - 2.9));
    CHECK(s[w].value[1] == doctest::Approx(-2.0 - 1.45));
    CHECK(st.iteration == 2);
  }
  SUBCASE("decay touches conv weights only") {
    OptimizerState st;
    s[w].grad = {0.0f, 0.0f};
    s[b].grad = {0.0f};
    sgd_step(s, st, 0.1, 0.0, 0.5);
    CHECK(s[w].value[0] == doctest::Approx(0.95));
    CHECK(s[b].value[0] == 0.5f);
  }
  SUBCASE("descends a convex quadratic below the curvature bound") {
    // f(w) = 0.5 * 3 * |w|^2, curvature 3, lr < 2/3
    OptimizerState st;
    double prev = 1e9;
    for (int i = 0; i < 10; ++i) {
      double f = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        f += 1.5 * double(s[w].value[k]) * s[w].value[k];
        s[w].grad[k] = 3.0f * s[w].value[k];
      }
      s[b].grad = {0.0f};
      CHECK(f < prev);
      prev = f;
      sgd_step(s, st, 0.2, 0.0, 0.0);
    }
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.total_iters = 400000;
  CHECK(lr_schedule(0, c) == doctest::Approx(1e-5));
  CHECK(lr_schedule(199999, c) == doctest::Approx(1e-5));
  CHECK(lr_schedule(200000, c) == doctest::Approx(1e-6));
  CHECK(lr_schedule(320000, c) == doctest::Approx(1e-7));
  c.total_iters = 1000;
  CHECK(lr_schedule(999, c) == doctest::Approx(1e-7));
  c.lr_drop_points = {0.8, 0.5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("batch sampler") {
  SUBCASE("single exact-size pair repeats the only crop") {
    const std::vector<ImagePair> one = tiny_dataset(1, 16);
    BatchSampler s(one, 16, 1);
    const auto [hazy, clear] = s.next(3);
    for (int b = 0; b < 3; ++b) {
      CHECK(max_abs_diff(hazy.item(b), one[0].hazy) == 0.0);
      CHECK(max_abs_diff(clear.item(b), one[0].clear) == 0.0);
    }
  }
  SUBCASE("hazy and clear crops are aligned") {
    const std::vector<ImagePair> ds = tiny_dataset(2, 32);
    BatchSampler s(ds, 8, 2);
    BatchSampler probe(ds, 8, 2);
    const auto [hazy, clear] = s.next(4);
    for (int b = 0; b < 4; ++b) {
      const auto d = probe.draw();
      const ImagePair& p = probe.pair(d.pair);
      CHECK(hazy.at(b, 1, 3, 5) == p.hazy.at(0, 1, d.y + 3, d.x + 5));
      CHECK(clear.at(b, 2, 7, 0) == p.clear.at(0, 2, d.y + 7, d.x));
    }
  }
  SUBCASE("fixed seed, identical sequence, independent of input order") {
    const std::vector<ImagePair> ds = tiny_dataset(3, 32);
    std::vector<ImagePair> shuffled = ds;
    std::swap(shuffled[0], shuffled[2]);
    BatchSampler a(ds, 16, 7);
    BatchSampler b(shuffled, 16, 7);
    for (int i = 0; i < 5; ++i) {
      const auto x = a.next(2), y = b.next(2);
      CHECK(max_abs_diff(x.first, y.first) == 0.0);
    }
  }
  SUBCASE("undersized images are skipped") {
    std::vector<ImagePair> ds = tiny_dataset(2, 32);
    ds.push_back(tiny_dataset(1, 8)[0]);
    ds.back().name = "small";
    CHECK(BatchSampler(ds, 16, 1).usable() == 2);
  }
  SUBCASE("crop offsets are uniform (chi-square, alpha 0.01)") {
    ImagePair big;
    big.name = "big";
    big.hazy = Tensor(Shape{1, 3, 256, 256});
    big.clear = Tensor(Shape{1, 3, 256, 256});
    BatchSampler s(std::vector<const ImagePair*>{&big}, 128, 11);
    constexpr int kDraws = 10000, kBins = 129;
    std::vector<int> ys(kBins), xs(kBins);
    for (int i = 0; i < kDraws; ++i) {
      const auto d = s.draw();
      ++ys[d.y];
      ++xs[d.x];
    }
    const double expected = double(kDraws) / kBins;
    auto stat = [&](const std::vector<int>& h) {
      double c = 0.0;
      for (int v : h) c += (v - expected) * (v - expected) / expected;
      return c;
    };
    constexpr double kCritical = 168.133;  // chi-square 0.99 quantile, 128 dof
    CHECK(stat(ys) < kCritical);
    CHECK(stat(xs) < kCritical);
  }
}

TEST_CASE("training loop") {
  const std::vector<ImagePair> ds = tiny_dataset(10, 32);
  const NetConfig net = NetConfig::single_scale(4);

  SUBCASE("zero iterations return the initialization") {
    const TrainResult r = train(ds, net, quick_config(0));
    const Network init(net, 5);
    for (std::size_t i = 0; i < init.weights().size(); ++i)
      CHECK(max_abs_diff(init.weights()[i].value, r.net.weights()[i].value) == 0.0);
    CHECK(r.curve.empty());
  }
  SUBCASE("200 iterations reduce the loss; runs are bit-identical") {
    const TrainResult a = train(ds, net, quick_config(200));
    REQUIRE(a.curve.size() == 200);
    CHECK(smoothed_loss(a.curve, 20) < smoothed_loss(a.curve, 20, true));
    const TrainResult b = train(ds, net, quick_config(200));
    for (std::size_t i = 0; i < a.net.weights().size(); ++i)
      CHECK(max_abs_diff(a.net.weights()[i].value, b.net.weights()[i].value) == 0.0);
    for (const auto& p : a.net.weights().params()) {
      if (p.kind == ParamKind::BnRunningVar) {
        for (float v : p.value.data()) CHECK((std::isfinite(v) && v > 0.0f));
      }
    }
  }
  SUBCASE("a non-finite loss aborts with a diagnostic checkpoint") {
    std::vector<ImagePair> bad = ds;
    for (auto& p : bad) p.hazy.fill(std::nanf(""));
    const auto dir = famed::test::scratch_dir("diverge");
    TrainConfig c = quick_config(50);
    c.checkpoint_path = (dir / "ckpt.fmdn").string();
    CHECK_THROWS_AS(train(bad, net, c), TrainingDiverged);
    CHECK(std::filesystem::exists(dir / "ckpt.fmdn.nan"));
    std::filesystem::remove_all(dir);
  }
}
