#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "famed/network.hpp"
#include "famed/tensor.hpp"

namespace famed {

struct TrainConfig {
  int batch_size = 48;
  int crop = 128;
  double lr0 = 1e-5;
  std::vector<double> lr_drop_points{0.5, 0.8};  // fractions of total_iters
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> alpha_scales{1.0, 1.0, 1.0};
  double alpha_fusion = 1.0;
  std::int64_t total_iters = 400000;
  std::uint64_t seed = 0;

  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;        // weight file written on checkpoints
  std::string loss_log_path;          // CSV: iter,lr,loss

  void validate() const;
  /// One-line summary printed by the CLI so runs can be reproduced.
  std::string describe() const;
};

/// Aligned hazy / clear images, [1,3,h,w] each.
struct ImagePair {
  std::string name;
  Tensor hazy;
  Tensor clear;
};

// ---------------------------------------------------------------------------
// Losses

struct L2Result {
  double value = 0.0;
  Tensor grad;  // d value / d pred
};

/// Mean squared error over all elements; gradient 2 (pred - gt) / N.
L2Result l2_loss(const Tensor& pred, const Tensor& gt);

struct LossResult {
  double value = 0.0;
  std::vector<double> scale_terms;  // unweighted MSE per scale
  double fusion_term = 0.0;
  std::vector<Tensor> grad_j;       // per scale
  Tensor grad_j_fusion;
};

/// sum_s alpha_s MSE(J_s, gt downsampled to scale s) + alpha_fusion
/// MSE(J_fusion, gt). Weight decay is left to sgd_step.
LossResult multiscale_loss(const NetOutputs& outputs, const Tensor& clear,
                           const std::vector<double>& alpha_scales,
                           double alpha_fusion);
inline LossResult multiscale_loss(const NetOutputs& outputs, const Tensor& clear,
                                  const TrainConfig& config) {
  return multiscale_loss(outputs, clear, config.alpha_scales, config.alpha_fusion);
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  std::vector<std::vector<Scalar>> velocity;  // mirrors WeightStore order
  std::int64_t iteration = 0;
};

/// Heavy-ball momentum SGD with coupled L2 decay on convolution weights:
/// v <- m v - lr (g + wd w); w <- w + v. BN running statistics are skipped.
void sgd_step(WeightStore& weights, OptimizerState& state, double lr,
              double momentum, double weight_decay);

/// Piecewise-constant: lr0 times drop_factor per drop point passed.
double lr_schedule(std::int64_t iter, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Sampling

/// Draws aligned random crops. Pairs are kept in name order so the draw
/// sequence depends only on the seed, not on the order they were supplied in.
class BatchSampler {
 public:
  BatchSampler(std::vector<const ImagePair*> pairs, int crop, std::uint64_t seed);
  BatchSampler(const std::vector<ImagePair>& pairs, int crop, std::uint64_t seed);

  struct Draw {
    std::size_t pair = 0;
    int y = 0;
    int x = 0;
  };

  Draw draw();
  /// (hazy, clear) batches of shape [batch,3,crop,crop].
  std::pair<Tensor, Tensor> next(int batch);

  std::size_t usable() const { return pairs_.size(); }
  const ImagePair& pair(std::size_t i) const { return *pairs_[i]; }

 private:
  std::vector<const ImagePair*> pairs_;
  int crop_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Training loop

struct LossRecord {
  std::int64_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_iteration;
};

struct TrainResult {
  Network net;
  std::vector<LossRecord> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds the network from `net_config` with `config.seed` and runs the
/// sample / forward / loss / backward / step loop. A non-finite loss aborts
/// with TrainingDiverged after writing "<checkpoint_path>.nan" when a
/// checkpoint path is configured.
TrainResult train(const std::vector<ImagePair>& dataset, const NetConfig& net_config,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Mean of the last `window` losses (or all, if fewer).
double smoothed_loss(const std::vector<LossRecord>& curve, std::size_t window,
                     bool from_start = false);

void write_loss_csv(const std::vector<LossRecord>& curve, const std::string& path);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradientCheckOptions {
  Mode mode = Mode::Train;
  double step = 1e-3;
  std::size_t max_per_tensor = 64;  // subsampled beyond this
  double tolerance = 1e-3;
  /// Floor on the relative-error denominator, so entries whose gradients
  /// are both at rounding level do not dominate.
  double denominator_floor = 1e-4;
  std::uint64_t seed = 1;
  /// Applied to the analytic gradients before comparison (fault injection).
  std::function<void(WeightStore&)> tamper;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes straddled a ReLU / max-pool kink
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradientCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  double tolerance = 1e-3;
  std::size_t skipped = 0;

  bool passed() const { return max_rel_error < tolerance; }
  std::vector<std::string> flagged() const;
};

/// Compares analytic gradients of the multi-scale loss (alphas 1) against
/// central differences for every learnable tensor. Entries whose probes
/// flip a ReLU or max-pool decision (at the step and at a tenth of it) are
/// skipped and counted. BN running statistics are restored afterwards.
GradientCheckReport gradient_check(Network& net, const Tensor& hazy, const Tensor& clear,
                                   const GradientCheckOptions& options = {});

}  // namespace famed
