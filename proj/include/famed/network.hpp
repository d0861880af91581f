#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "famed/ops.hpp"
#include "famed/tensor.hpp"

namespace famed {

enum class Variant { SS, GP, LP };

std::string_view to_string(Variant v);
std::string_view to_string(PoolMode m);
Variant parse_variant(std::string_view s);
PoolMode parse_pool_mode(std::string_view s);

/// Architecture selector for the network family.
struct NetConfig {
  Variant variant = Variant::SS;
  int scales = 1;
  int feature_dim = 32;
  bool use_bn = true;
  PoolMode pool_mode = PoolMode::Avg;
  int front_conv3x3_channels = 0;  // 0 disables the 3x3 front conv

  /// Throws std::invalid_argument explaining the first inconsistency.
  void validate() const;

  /// Single-line "key=value" form stored in weight files.
  std::string serialize() const;
  static NetConfig parse(std::string_view text);

  bool operator==(const NetConfig&) const = default;

  static NetConfig single_scale(int feature_dim = 32);
  static NetConfig pyramid(Variant variant, int scales = 3, int feature_dim = 32);
};

// ---------------------------------------------------------------------------
// Parameters

enum class ParamKind : std::uint8_t {
  ConvWeight,
  ConvBias,
  BnGamma,
  BnBeta,
  BnRunningMean,
  BnRunningVar,
};

/// Updated by the optimizer.
bool is_learnable(ParamKind kind);
/// Receives weight decay. Only convolution weights do.
bool is_decayed(ParamKind kind);

struct Param {
  std::string name;
  ParamKind kind = ParamKind::ConvWeight;
  Tensor value;
  std::vector<Scalar> grad;  // same length as value; empty for statistics
};

/// Ordered, named parameter tensors.
class WeightStore {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::size_t add(std::string name, ParamKind kind, Shape shape, Scalar fill = 0.0f);

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::size_t index_of(std::string_view name) const;  // npos if absent
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;

  std::size_t learnable_count() const;
  std::size_t statistic_count() const;
  std::size_t value_count() const;

  void zero_grad();

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Graph description

/// One block f^l = phi^l(concat(f^k, k in Lambda^l)).
struct BlockSpec {
  int index = 0;              // 1..5
  std::vector<int> inputs;    // dense-connection index set
  int in_channels = 0;
  int out_channels = 0;
  bool batch_norm = false;
  bool relu = true;
  int pool_kernel = 1;        // 1 means no pooling layer
  std::size_t weight = WeightStore::npos;
  std::size_t bias = WeightStore::npos;
  std::size_t gamma = WeightStore::npos;
  std::size_t beta = WeightStore::npos;
  std::size_t running_mean = WeightStore::npos;
  std::size_t running_var = WeightStore::npos;
};

struct EncoderSpec {
  int scale = 0;  // 0 = full resolution, s = 1/2^s
  int front_channels = 0;
  std::size_t front_weight = WeightStore::npos;
  std::size_t front_bias = WeightStore::npos;
  std::vector<BlockSpec> blocks;
  bool residual_head = false;  // LP finer scales predict a signed residual
};

/// Dense-connection index sets, blocks 1..5.
inline const std::array<std::vector<int>, 5>& dense_connections() {
  static const std::array<std::vector<int>, 5> sets{
      std::vector<int>{0}, std::vector<int>{1}, std::vector<int>{1, 2},
      std::vector<int>{2, 3}, std::vector<int>{1, 2, 3, 4}};
  return sets;
}

/// Pooling window side of block l (1..5): 2l-1 for l <= 4, none for block 5.
inline int pooling_kernel(int block) { return block <= 4 ? 2 * block - 1 : 1; }

// ---------------------------------------------------------------------------
// Forward records

struct BlockTape {
  Tensor concat_in;
  BatchNormCache bn;
  Tensor activation;  // after ReLU (or after conv/BN when no ReLU)
  PoolCache pool;
};

struct EncoderTape {
  Tensor front_activation;  // ReLU output of the 3x3 front conv
  std::vector<BlockTape> blocks;
};

struct NetOutputs {
  std::vector<Tensor> inputs;  // hazy input per scale
  std::vector<Tensor> k;       // K per scale (at that scale's resolution)
  std::vector<Tensor> j;       // recovered radiance per scale, unclamped
  Tensor k_concat;             // multi-scale only
  Tensor k_fusion;
  Tensor j_fusion;             // unclamped
};

struct Tape {
  Mode mode = Mode::Eval;
  std::vector<EncoderTape> encoders;
};

struct LayerFlops {
  std::string name;
  std::uint64_t macs = 0;       // multiply-adds of weights
  std::uint64_t bias_adds = 0;
  std::uint64_t other_ops = 0;  // BN / ReLU / pooling / resize element ops
};

struct FlopReport {
  std::uint64_t conv_macs = 0;
  std::uint64_t bias_adds = 0;
  std::uint64_t bn_ops = 0;
  std::uint64_t relu_ops = 0;
  std::uint64_t pool_ops = 0;
  std::uint64_t resize_ops = 0;
  std::vector<LayerFlops> layers;

  /// Multiply-adds of every weighted layer, bias additions included.
  std::uint64_t all_ops() const { return conv_macs + bias_adds; }
  /// Everything, including parameter-free layers.
  std::uint64_t element_ops() const {
    return all_ops() + bn_ops + relu_ops + pool_ops + resize_ops;
  }
};

/// The network family: one K-encoder per scale plus an optional 1x1 fusion
/// layer. Holds its WeightStore.
class Network {
 public:
  /// Architecture with freshly initialized weights.
  Network(const NetConfig& config, std::uint64_t seed);
  /// Architecture only; the store holds no values until load_weights.
  static Network architecture(const NetConfig& config);

  const NetConfig& config() const { return config_; }
  int scales() const { return config_.scales; }
  const std::vector<EncoderSpec>& encoders() const { return encoders_; }
  std::size_t fusion_weight() const { return fusion_weight_; }
  std::size_t fusion_bias() const { return fusion_bias_; }

  WeightStore& weights() { return store_; }
  const WeightStore& weights() const { return store_; }
  bool has_weights() const { return has_weights_; }

  /// Replaces parameter values. Every tensor of this architecture must be
  /// present with the same shape; the first offending name is reported.
  void load_weights(const WeightStore& source);

  /// Runs the network. Train mode uses and updates BN batch statistics.
  /// When `tape` is given the intermediates needed by backward are kept.
  NetOutputs forward(const Tensor& hazy, Mode mode, Tape* tape = nullptr);
  /// Eval-mode forward; does not touch any state.
  NetOutputs infer(const Tensor& hazy) const;

  /// Accumulates parameter gradients given gradients of the per-scale J
  /// outputs and of J_fusion (an empty tensor counts as zero).
  void backward(const Tape& tape, const NetOutputs& out,
                const std::vector<Tensor>& grad_j, const Tensor& grad_j_fusion);

  /// Size of scale s for a full-resolution h x w input.
  static std::pair<int, int> scale_size(int h, int w, int scale);

 private:
  explicit Network(const NetConfig& config);
  void build();
  void initialize(std::uint64_t seed);
  Tensor run_encoder(const EncoderSpec& enc, const Tensor& input, Mode mode,
                     EncoderTape* tape);
  void backward_encoder(const EncoderSpec& enc, const EncoderTape& tape,
                        const Tensor& input, Tensor grad_head);

  NetConfig config_;
  std::vector<EncoderSpec> encoders_;
  std::size_t fusion_weight_ = WeightStore::npos;
  std::size_t fusion_bias_ = WeightStore::npos;
  WeightStore store_;
  bool has_weights_ = false;
};

inline Network build_network(const NetConfig& config, std::uint64_t seed) {
  return Network(config, seed);
}

/// Closed-form count of learnable parameters.
std::size_t parameter_count(const NetConfig& config);

/// Weighted-layer multiply-adds (and the other element ops, itemized) for
/// one h x w input.
FlopReport count_flops(const NetConfig& config, int h, int w);
inline FlopReport count_flops(const Network& net, int h, int w) {
  return count_flops(net.config(), h, w);
}

/// Receptive field side of one encoder at its own scale, composed along the
/// dense connections from the pooling windows (and the 3x3 front conv).
int encoder_receptive_field(const std::vector<BlockSpec>& blocks, bool front_conv3x3);

/// Receptive field side in full-resolution pixels: the widest encoder
/// footprint scaled by its pyramid factor.
int receptive_field(const Network& net);
int receptive_field(const NetConfig& config);

}  // namespace famed
