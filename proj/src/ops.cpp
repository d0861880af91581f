#include "famed/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace famed {

namespace {

using Mat = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using ConstMat =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_conv_shapes(const Tensor& input, const Tensor& weight,
                       const Tensor& bias, int kernel, const char* op) {
  const Shape& w = weight.shape();
  if (w.h != kernel || w.w != kernel) {
    throw std::invalid_argument(std::string(op) + ": weight must be [co,ci," +
                                std::to_string(kernel) + "," +
                                std::to_string(kernel) + "], got " + w.str());
  }
  if (w.c != input.c()) {
    throw std::invalid_argument(std::string(op) + ": weight expects " +
                                std::to_string(w.c) + " input channels, input " +
                                input.shape().str() + " has " +
                                std::to_string(input.c()));
  }
  if (bias.numel() != static_cast<std::size_t>(w.n)) {
    throw std::invalid_argument(std::string(op) + ": bias has " +
                                std::to_string(bias.numel()) +
                                " values for " + std::to_string(w.n) +
                                " output channels");
  }
}



}  // namespace

// ---------------------------------------------------------------------------

Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_conv_shapes(input, weight, bias, 1, "conv1x1");
  const int co = weight.n();
  const int ci = weight.c();
  Tensor out(Shape{input.n(), co, input.h(), input.w()});
  const auto hw = static_cast<Eigen::Index>(input.shape().plane());
  const ConstMat w(weight.raw(), co, ci);
  const Eigen::Map<const Vec> b(bias.raw(), co);
  for (int n = 0; n < input.n(); ++n) {
    Mat o(out.plane(n, 0), co, hw);
    o.noalias() = w * ConstMat(input.plane(n, 0), ci, hw);
    o.colwise() += b;
  }
  return out;
}

Tensor conv1x1_backward(const Tensor& input, const Tensor& weight,
                        const Tensor& grad_out, std::span<Scalar> grad_weight,
                        std::span<Scalar> grad_bias, bool want_input_grad) {
  const int co = weight.n();
  const int ci = weight.c();
  require_same_shape(grad_out.shape(),
                     Shape{input.n(), co, input.h(), input.w()},
                     "conv1x1_backward");
  if (grad_weight.size() != weight.numel() ||
      grad_bias.size() != static_cast<std::size_t>(co)) {
    throw std::invalid_argument("conv1x1_backward: gradient buffer size mismatch");
  }
  const auto hw = static_cast<Eigen::Index>(input.shape().plane());
  Mat gw(grad_weight.data(), co, ci);
  Eigen::Map<Vec> gb(grad_bias.data(), co);
  for (int n = 0; n < input.n(); ++n) {
    const ConstMat g(grad_out.plane(n, 0), co, hw);
    gw.noalias() += g * ConstMat(input.plane(n, 0), ci, hw).transpose();
    gb += g.rowwise().sum();
  }
  if (!want_input_grad) return {};
  Tensor grad_in(input.shape());
  const ConstMat w(weight.raw(), co, ci);
  for (int n = 0; n < input.n(); ++n) {
    Mat(grad_in.plane(n, 0), ci, hw).noalias() =
        w.transpose() * ConstMat(grad_out.plane(n, 0), co, hw);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Tensor conv3x3(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_conv_shapes(input, weight, bias, 3, "conv3x3");
  const int co = weight.n();
  const int ci = weight.c();
  const int H = input.h();
  const int W = input.w();
  Tensor out(Shape{input.n(), co, H, W});
  for (int b = 0; b < input.n(); ++b) {
    for (int o = 0; o < co; ++o) {
      Scalar* dst = out.plane(b, o);
      std::fill_n(dst, out.shape().plane(), bias[o]);
      for (int i = 0; i < ci; ++i) {
        const Scalar* src = input.plane(b, i);
        const Scalar* k = weight.raw() + (static_cast<std::size_t>(o) * ci + i) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(H, H - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x0 = std::max(0, -dx);
            const int x1 = std::min(W, W - dx);
            const Scalar wv = k[ky * 3 + kx];
            for (int y = y0; y < y1; ++y) {
              Scalar* drow = dst + static_cast<std::size_t>(y) * W;
              const Scalar* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) drow[x] += wv * srow[x];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv3x3_backward(const Tensor& input, const Tensor& weight,
                        const Tensor& grad_out, std::span<Scalar> grad_weight,
                        std::span<Scalar> grad_bias, bool want_input_grad) {
  const int co = weight.n();
  const int ci = weight.c();
  const int H = input.h();
  const int W = input.w();
  require_same_shape(grad_out.shape(), Shape{input.n(), co, H, W},
                     "conv3x3_backward");
  if (grad_weight.size() != weight.numel() ||
      grad_bias.size() != static_cast<std::size_t>(co)) {
    throw std::invalid_argument("conv3x3_backward: gradient buffer size mismatch");
  }
  Tensor grad_in;
  if (want_input_grad) grad_in = Tensor(input.shape());
  for (int b = 0; b < input.n(); ++b) {
    for (int o = 0; o < co; ++o) {
      const Scalar* g = grad_out.plane(b, o);
      double sb = 0.0;
      for (std::size_t p = 0; p < grad_out.shape().plane(); ++p) sb += g[p];
      grad_bias[o] += static_cast<Scalar>(sb);
      for (int i = 0; i < ci; ++i) {
        const Scalar* src = input.plane(b, i);
        Scalar* gin = want_input_grad ? grad_in.plane(b, i) : nullptr;
        const std::size_t kofs = (static_cast<std::size_t>(o) * ci + i) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(H, H - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x0 = std::max(0, -dx);
            const int x1 = std::min(W, W - dx);
            const Scalar wv = weight[kofs + ky * 3 + kx];
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const Scalar* grow = g + static_cast<std::size_t>(y) * W;
              const std::size_t srow = static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) {
                acc += static_cast<double>(grow[x]) * src[srow + x];
                if (gin) gin[srow + x] += wv * grow[x];
              }
            }
            grad_weight[kofs + ky * 3 + kx] += static_cast<Scalar>(acc);
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

BatchNormState::BatchNormState(int channels)
    : gamma(channels, 1.0f),
      beta(channels, 0.0f),
      running_mean(channels, 0.0f),
      running_var(channels, 1.0f) {}

BatchNormRef BatchNormState::ref() {
  return BatchNormRef{gamma, beta, running_mean, running_var, momentum, eps};
}

Tensor batch_norm(const Tensor& input, const BatchNormRef& state, Mode mode,
                  BatchNormCache* cache) {
  const int C = input.c();
  const auto channels = static_cast<std::size_t>(C);
  if (state.gamma.size() != channels || state.beta.size() != channels) {
    throw std::invalid_argument("batch_norm: state has " +
                                std::to_string(state.gamma.size()) +
                                " channels, input " + input.shape().str());
  }
  if (mode == Mode::Eval && (state.running_mean.size() != channels ||
                             state.running_var.size() != channels)) {
    throw std::logic_error("batch_norm: eval mode requires initialized running statistics");
  }
  if (mode == Mode::Train && (state.running_mean.size() != channels ||
                              state.running_var.size() != channels)) {
    throw std::invalid_argument("batch_norm: running statistics size mismatch");
  }

  const std::size_t hw = input.shape().plane();
  const std::size_t count = hw * input.n();
  std::vector<double> mean(C), inv_std(C);

  if (mode == Mode::Train) {
    if (count < 2) throw std::invalid_argument("batch_norm: train mode needs more than one value per channel");
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int b = 0; b < input.n(); ++b) {
        const Scalar* x = input.plane(b, c);
        for (std::size_t p = 0; p < hw; ++p) s += x[p];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (int b = 0; b < input.n(); ++b) {
        const Scalar* x = input.plane(b, c);
        for (std::size_t p = 0; p < hw; ++p) {
          const double d = x[p] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[c] = static_cast<Scalar>(
          (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu);
      state.running_var[c] = static_cast<Scalar>(
          (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps);
    }
  }

  Tensor out(input.shape());
  Tensor normalized;
  if (cache) normalized = Tensor(input.shape());
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < C; ++c) {
      const Scalar* x = input.plane(b, c);
      Scalar* y = out.plane(b, c);
      Scalar* xh = cache ? normalized.plane(b, c) : nullptr;
      // Centre in double: a mean rounded to Scalar would shift the whole
      // channel coherently.
      const double mu = mean[c];
      const double is = inv_std[c];
      const double g = state.gamma[c];
      const double be = state.beta[c];
      for (std::size_t p = 0; p < hw; ++p) {
        const double n = (x[p] - mu) * is;
        if (xh) xh[p] = static_cast<Scalar>(n);
        y[p] = static_cast<Scalar>(g * n + be);
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std.assign(inv_std.begin(), inv_std.end());
  }
  return out;
}

Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& grad_out,
                           std::span<const Scalar> gamma,
                           std::span<Scalar> grad_gamma,
                           std::span<Scalar> grad_beta) {
  const Tensor& xh = cache.normalized;
  require_same_shape(grad_out.shape(), xh.shape(), "batch_norm_backward");
  const int C = xh.c();
  const std::size_t hw = xh.shape().plane();
  const double count = static_cast<double>(hw * xh.n());
  Tensor grad_in(xh.shape());
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (int b = 0; b < xh.n(); ++b) {
      const Scalar* dy = grad_out.plane(b, c);
      const Scalar* n = xh.plane(b, c);
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        s0 += dy[p];
        s1 += static_cast<double>(dy[p]) * n[p];
      }
      sum_dy += s0;
      sum_dy_xh += s1;
    }
    grad_gamma[c] += static_cast<Scalar>(sum_dy_xh);
    grad_beta[c] += static_cast<Scalar>(sum_dy);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    if (cache.mode == Mode::Eval) {
      const auto sf = static_cast<Scalar>(scale);
      for (int b = 0; b < xh.n(); ++b) {
        const Scalar* dy = grad_out.plane(b, c);
        Scalar* dx = grad_in.plane(b, c);
        for (std::size_t p = 0; p < hw; ++p) dx[p] = sf * dy[p];
      }
    } else {
      const double mean_dy = sum_dy / count;
      const double mean_dy_xh = sum_dy_xh / count;
      for (int b = 0; b < xh.n(); ++b) {
        const Scalar* dy = grad_out.plane(b, c);
        const Scalar* n = xh.plane(b, c);
        Scalar* dx = grad_in.plane(b, c);
        for (std::size_t p = 0; p < hw; ++p) {
          dx[p] = static_cast<Scalar>(scale * (dy[p] - mean_dy - n[p] * mean_dy_xh));
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  const Scalar* x = input.raw();
  Scalar* y = out.raw();
  for (std::size_t i = 0; i < input.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    g[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  }
  return g;
}

void relu_backward_inplace(const Tensor& output, Tensor& grad) {
  require_same_shape(output.shape(), grad.shape(), "relu_backward");
  const Scalar* y = output.raw();
  Scalar* g = grad.raw();
  for (std::size_t i = 0; i < output.numel(); ++i) {
    if (!(y[i] > 0.0f)) g[i] = 0.0f;
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("pool: kernel must be a positive odd integer, got " +
                                std::to_string(kernel));
  }
}

// Clipped-window sum along rows then columns. `scratch` holds one plane.
void box_sum_plane(const Scalar* src, Scalar* dst, Scalar* scratch, int H, int W,
                   int pad) {
  const int inner0 = std::min(pad, W);
  const int inner1 = std::max(inner0, W - pad);
  for (int y = 0; y < H; ++y) {
    const Scalar* s = src + static_cast<std::size_t>(y) * W;
    Scalar* t = scratch + static_cast<std::size_t>(y) * W;
    auto clipped = [&](int x) {
      const int a = std::max(0, x - pad);
      const int b = std::min(W - 1, x + pad);
      Scalar acc = 0.0f;
      for (int k = a; k <= b; ++k) acc += s[k];
      t[x] = acc;
    };
    for (int x = 0; x < inner0; ++x) clipped(x);
    std::fill(t + inner0, t + inner1, 0.0f);
    for (int k = -pad; k <= pad; ++k) {
      const Scalar* sk = s + k;
      for (int x = inner0; x < inner1; ++x) t[x] += sk[x];
    }
    for (int x = inner1; x < W; ++x) clipped(x);
  }
  for (int y = 0; y < H; ++y) {
    const int a = std::max(0, y - pad);
    const int b = std::min(H - 1, y + pad);
    Scalar* d = dst + static_cast<std::size_t>(y) * W;
    std::fill_n(d, W, 0.0f);
    for (int k = a; k <= b; ++k) {
      const Scalar* t = scratch + static_cast<std::size_t>(k) * W;
      for (int x = 0; x < W; ++x) d[x] += t[x];
    }
  }
}

std::vector<Scalar> window_counts(int n, int pad) {
  std::vector<Scalar> c(n);
  for (int i = 0; i < n; ++i) {
    c[i] = static_cast<Scalar>(std::min(n - 1, i + pad) - std::max(0, i - pad) + 1);
  }
  return c;
}

}  // namespace

Tensor pool(const Tensor& input, int kernel, PoolMode mode, PoolCache* cache) {
  check_kernel(kernel);
  const int H = input.h();
  const int W = input.w();
  const int pad = (kernel - 1) / 2;
  const std::size_t hw = input.shape().plane();
  Tensor out(input.shape());
  if (cache) {
    cache->mode = mode;
    cache->kernel = kernel;
    cache->shape = input.shape();
    cache->argmax.clear();
  }

  if (mode == PoolMode::Avg) {
    const auto cy = window_counts(H, pad);
    const auto cx = window_counts(W, pad);
    std::vector<Scalar> scratch(hw);
    for (int b = 0; b < input.n(); ++b) {
      for (int c = 0; c < input.c(); ++c) {
        Scalar* d = out.plane(b, c);
        box_sum_plane(input.plane(b, c), d, scratch.data(), H, W, pad);
        for (int y = 0; y < H; ++y) {
          Scalar* row = d + static_cast<std::size_t>(y) * W;
          for (int x = 0; x < W; ++x) row[x] /= cy[y] * cx[x];
        }
      }
    }
    return out;
  }

  // Max: row maxima with leftmost argmax, then topmost row among ties. This
  // yields the first maximum in row-major scan order of the window.
  std::vector<Scalar> row_max(hw);
  std::vector<std::uint32_t> row_arg(hw);
  if (cache) cache->argmax.resize(input.numel());
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < input.c(); ++c) {
      const Scalar* s = input.plane(b, c);
      for (int y = 0; y < H; ++y) {
        const Scalar* srow = s + static_cast<std::size_t>(y) * W;
        for (int x = 0; x < W; ++x) {
          const int a = std::max(0, x - pad);
          const int e = std::min(W - 1, x + pad);
          int best = a;
          for (int k = a + 1; k <= e; ++k) {
            if (srow[k] > srow[best]) best = k;
          }
          row_max[static_cast<std::size_t>(y) * W + x] = srow[best];
          row_arg[static_cast<std::size_t>(y) * W + x] =
              static_cast<std::uint32_t>(static_cast<std::size_t>(y) * W + best);
        }
      }
      Scalar* d = out.plane(b, c);
      std::uint32_t* am = cache ? cache->argmax.data() +
                                      (static_cast<std::size_t>(b) * input.c() + c) * hw
                                : nullptr;
      for (int y = 0; y < H; ++y) {
        const int a = std::max(0, y - pad);
        const int e = std::min(H - 1, y + pad);
        for (int x = 0; x < W; ++x) {
          std::size_t best = static_cast<std::size_t>(a) * W + x;
          for (int k = a + 1; k <= e; ++k) {
            const std::size_t idx = static_cast<std::size_t>(k) * W + x;
            if (row_max[idx] > row_max[best]) best = idx;
          }
          const std::size_t o = static_cast<std::size_t>(y) * W + x;
          d[o] = row_max[best];
          if (am) am[o] = row_arg[best];
        }
      }
    }
  }
  return out;
}

Tensor pool_backward(const PoolCache& cache, const Tensor& grad_out) {
  require_same_shape(grad_out.shape(), cache.shape, "pool_backward");
  const int H = cache.shape.h;
  const int W = cache.shape.w;
  const int pad = (cache.kernel - 1) / 2;
  const std::size_t hw = cache.shape.plane();
  Tensor grad_in(cache.shape);
  if (cache.mode == PoolMode::Avg) {
    const auto cy = window_counts(H, pad);
    const auto cx = window_counts(W, pad);
    std::vector<Scalar> scaled(hw), scratch(hw);
    for (int b = 0; b < cache.shape.n; ++b) {
      for (int c = 0; c < cache.shape.c; ++c) {
        const Scalar* g = grad_out.plane(b, c);
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            const std::size_t o = static_cast<std::size_t>(y) * W + x;
            scaled[o] = g[o] / (cy[y] * cx[x]);
          }
        }
        box_sum_plane(scaled.data(), grad_in.plane(b, c), scratch.data(), H, W, pad);
      }
    }
    return grad_in;
  }
  if (cache.argmax.size() != cache.shape.numel()) {
    throw std::logic_error("pool_backward: max-pool cache has no argmax record");
  }
  for (int b = 0; b < cache.shape.n; ++b) {
    for (int c = 0; c < cache.shape.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * cache.shape.c + c) * hw;
      const Scalar* g = grad_out.plane(b, c);
      Scalar* d = grad_in.plane(b, c);
      for (std::size_t o = 0; o < hw; ++o) d[cache.argmax[base + o]] += g[o];
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Tensor concat_channels(std::span<const Tensor* const> inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& first = inputs[0]->shape();
  int channels = 0;
  for (const Tensor* t : inputs) {
    const Shape& s = t->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw std::invalid_argument("concat_channels: batch/spatial mismatch " +
                                  first.str() + " vs " + s.str());
    }
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  const std::size_t hw = first.plane();
  for (int b = 0; b < first.n; ++b) {
    int offset = 0;
    for (const Tensor* t : inputs) {
      std::copy_n(t->plane(b, 0), hw * t->c(), out.plane(b, offset));
      offset += t->c();
    }
  }
  return out;
}

Tensor concat_channels(std::initializer_list<const Tensor*> inputs) {
  return concat_channels(std::span<const Tensor* const>(inputs.begin(), inputs.size()));
}

std::vector<Tensor> split_channels(const Tensor& input, std::span<const int> counts) {
  int total = 0;
  for (int c : counts) total += c;
  if (total != input.c()) {
    throw std::invalid_argument("split_channels: counts sum to " +
                                std::to_string(total) + ", input has " +
                                std::to_string(input.c()) + " channels");
  }
  std::vector<Tensor> parts;
  parts.reserve(counts.size());
  int offset = 0;
  for (int c : counts) {
    parts.push_back(input.channels(offset, c));
    offset += c;
  }
  return parts;
}

// ---------------------------------------------------------------------------

namespace {

struct Tap {
  int i0;
  int i1;
  Scalar frac;
};

std::vector<Tap> resize_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    Scalar frac = static_cast<Scalar>(src - i0);
    if (i1 == i0) frac = 0.0f;
    taps[d] = Tap{i0, i1, frac};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resize: output size must be positive");
  }
  if (input.h() == out_h && input.w() == out_w) return input;
  const auto ty = resize_taps(input.h(), out_h);
  const auto tx = resize_taps(input.w(), out_w);
  const int W = input.w();
  Tensor out(Shape{input.n(), input.c(), out_h, out_w});
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < input.c(); ++c) {
      const Scalar* s = input.plane(b, c);
      Scalar* d = out.plane(b, c);
      for (int y = 0; y < out_h; ++y) {
        const Scalar* r0 = s + static_cast<std::size_t>(ty[y].i0) * W;
        const Scalar* r1 = s + static_cast<std::size_t>(ty[y].i1) * W;
        const Scalar ly = ty[y].frac;
        for (int x = 0; x < out_w; ++x) {
          const Tap& t = tx[x];
          const Scalar top = (1.0f - t.frac) * r0[t.i0] + t.frac * r0[t.i1];
          const Scalar bot = (1.0f - t.frac) * r1[t.i0] + t.frac * r1[t.i1];
          d[static_cast<std::size_t>(y) * out_w + x] = (1.0f - ly) * top + ly * bot;
        }
      }
    }
  }
  return out;
}

Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w) {
  if (in_h < 1 || in_w < 1) {
    throw std::invalid_argument("bilinear_resize_backward: input size must be positive");
  }
  if (grad_out.h() == in_h && grad_out.w() == in_w) return grad_out;
  const int out_h = grad_out.h();
  const int out_w = grad_out.w();
  const auto ty = resize_taps(in_h, out_h);
  const auto tx = resize_taps(in_w, out_w);
  Tensor grad_in(Shape{grad_out.n(), grad_out.c(), in_h, in_w});
  for (int b = 0; b < grad_out.n(); ++b) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const Scalar* g = grad_out.plane(b, c);
      Scalar* d = grad_in.plane(b, c);
      for (int y = 0; y < out_h; ++y) {
        Scalar* r0 = d + static_cast<std::size_t>(ty[y].i0) * in_w;
        Scalar* r1 = d + static_cast<std::size_t>(ty[y].i1) * in_w;
        const Scalar ly = ty[y].frac;
        for (int x = 0; x < out_w; ++x) {
          const Tap& t = tx[x];
          const Scalar v = g[static_cast<std::size_t>(y) * out_w + x];
          r0[t.i0] += (1.0f - ly) * (1.0f - t.frac) * v;
          r0[t.i1] += (1.0f - ly) * t.frac * v;
          r1[t.i0] += ly * (1.0f - t.frac) * v;
          r1[t.i1] += ly * t.frac * v;
        }
      }
    }
  }
  return grad_in;
}

}  // namespace famed
