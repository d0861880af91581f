#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "famed/tensor.hpp"

namespace famed {

enum class Mode { Train, Eval };
enum class PoolMode { Avg, Max };

// ---------------------------------------------------------------------------
// Point-wise convolution.
//
// weight is [co, ci, 1, 1], bias is [1, co, 1, 1].
// out[n,o,y,x] = sum_i W[o,i] * in[n,i,y,x] + b[o]

Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Accumulates into grad_weight / grad_bias (+=). Returns the input gradient
/// unless `want_input_grad` is false, in which case an empty tensor comes back.
Tensor conv1x1_backward(const Tensor& input, const Tensor& weight,
                        const Tensor& grad_out, std::span<Scalar> grad_weight,
                        std::span<Scalar> grad_bias, bool want_input_grad = true);

// 3x3 convolution, stride 1, zero pad 1. weight is [co, ci, 3, 3].
Tensor conv3x3(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor conv3x3_backward(const Tensor& input, const Tensor& weight,
                        const Tensor& grad_out, std::span<Scalar> grad_weight,
                        std::span<Scalar> grad_bias, bool want_input_grad = true);

// ---------------------------------------------------------------------------
// Batch normalization.

/// Non-owning view of one BN layer's parameters and statistics.
struct BatchNormRef {
  std::span<Scalar> gamma;
  std::span<Scalar> beta;
  std::span<Scalar> running_mean;
  std::span<Scalar> running_var;
  Scalar momentum = 0.1f;
  Scalar eps = 1e-5f;
};

/// Owning BN parameters. A default-constructed state has no running
/// statistics and cannot be evaluated.
struct BatchNormState {
  std::vector<Scalar> gamma;
  std::vector<Scalar> beta;
  std::vector<Scalar> running_mean;
  std::vector<Scalar> running_var;
  Scalar momentum = 0.1f;
  Scalar eps = 1e-5f;

  BatchNormState() = default;
  /// gamma 1, beta 0, running mean 0, running var 1.
  explicit BatchNormState(int channels);

  int channels() const { return static_cast<int>(gamma.size()); }
  BatchNormRef ref();
};

struct BatchNormCache {
  Mode mode = Mode::Eval;
  Tensor normalized;               // x_hat
  std::vector<Scalar> inv_std;      // per channel
};

/// Train mode normalizes with batch statistics over (n,h,w) and updates the
/// running statistics (new = (1-m)*old + m*batch, unbiased batch variance).
/// Eval mode uses the running statistics only.
Tensor batch_norm(const Tensor& input, const BatchNormRef& state, Mode mode,
                  BatchNormCache* cache = nullptr);

Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& grad_out,
                           std::span<const Scalar> gamma,
                           std::span<Scalar> grad_gamma,
                           std::span<Scalar> grad_beta);

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& input);
/// Gradient flows where input > 0; zero at exactly 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);
/// Same, using the forward output (positive iff input positive).
void relu_backward_inplace(const Tensor& output, Tensor& grad);

// ---------------------------------------------------------------------------
// Stride-1 pooling with an odd square window of side `kernel` and padding
// (kernel-1)/2. Padding never contributes: avg divides by the number of
// in-bounds elements, max scans in-bounds elements only.

struct PoolCache {
  PoolMode mode = PoolMode::Avg;
  int kernel = 1;
  Shape shape{};
  std::vector<std::uint32_t> argmax;  // max mode: flat in-plane index
};

Tensor pool(const Tensor& input, int kernel, PoolMode mode,
            PoolCache* cache = nullptr);
Tensor pool_backward(const PoolCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------

Tensor concat_channels(std::span<const Tensor* const> inputs);
Tensor concat_channels(std::initializer_list<const Tensor*> inputs);
/// Inverse of concat_channels: splits along channels by the given counts.
std::vector<Tensor> split_channels(const Tensor& input,
                                   std::span<const int> counts);

// ---------------------------------------------------------------------------
// Bilinear resampling, half-pixel centers (align_corners = false), source
// coordinates clamped to the image.

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w);

}  // namespace famed
