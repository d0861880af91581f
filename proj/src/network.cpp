#include "famed/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "famed/haze_model.hpp"

namespace famed {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::SS: return "ss";
    case Variant::GP: return "gp";
    case Variant::LP: return "lp";
  }
  return "?";
}

std::string_view to_string(PoolMode m) { return m == PoolMode::Avg ? "avg" : "max"; }

Variant parse_variant(std::string_view s) {
  if (s == "ss" || s == "SS") return Variant::SS;
  if (s == "gp" || s == "GP") return Variant::GP;
  if (s == "lp" || s == "LP") return Variant::LP;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected ss|gp|lp)");
}

PoolMode parse_pool_mode(std::string_view s) {
  if (s == "avg") return PoolMode::Avg;
  if (s == "max") return PoolMode::Max;
  throw std::invalid_argument("unknown pool mode '" + std::string(s) + "' (expected avg|max)");
}

// ---------------------------------------------------------------------------

void NetConfig::validate() const {
  if (variant == Variant::SS && scales != 1) {
    throw std::invalid_argument("single-scale variant requires scales = 1, got " +
                                std::to_string(scales));
  }
  if (variant != Variant::SS && (scales < 2 || scales > 3)) {
    throw std::invalid_argument("pyramid variants use 2 or 3 scales, got " +
                                std::to_string(scales));
  }
  if (feature_dim < 3) {
    throw std::invalid_argument("feature_dim must be >= 3, got " +
                                std::to_string(feature_dim));
  }
  if (front_conv3x3_channels < 0) {
    throw std::invalid_argument("front_conv3x3_channels must be >= 0");
  }
}

std::string NetConfig::serialize() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << " scales=" << scales
     << " feature_dim=" << feature_dim << " bn=" << (use_bn ? 1 : 0)
     << " pool=" << to_string(pool_mode) << " front3x3=" << front_conv3x3_channels;
  return os.str();
}

NetConfig NetConfig::parse(std::string_view text) {
  NetConfig cfg;
  std::istringstream is{std::string(text)};
  std::string token;
  bool seen_scales = false;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("malformed config token '" + token + "'");
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "variant") cfg.variant = parse_variant(value);
      else if (key == "scales") { cfg.scales = std::stoi(value); seen_scales = true; }
      else if (key == "feature_dim") cfg.feature_dim = std::stoi(value);
      else if (key == "bn") cfg.use_bn = std::stoi(value) != 0;
      else if (key == "pool") cfg.pool_mode = parse_pool_mode(value);
      else if (key == "front3x3") cfg.front_conv3x3_channels = std::stoi(value);
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("bad config value in '" + token + "': " + e.what());
    }
  }
  if (!seen_scales) cfg.scales = cfg.variant == Variant::SS ? 1 : 3;
  cfg.validate();
  return cfg;
}

NetConfig NetConfig::single_scale(int feature_dim) {
  NetConfig c;
  c.feature_dim = feature_dim;
  return c;
}

NetConfig NetConfig::pyramid(Variant variant, int scales, int feature_dim) {
  NetConfig c;
  c.variant = variant;
  c.scales = scales;
  c.feature_dim = feature_dim;
  return c;
}

// ---------------------------------------------------------------------------

bool is_learnable(ParamKind kind) {
  return kind != ParamKind::BnRunningMean && kind != ParamKind::BnRunningVar;
}

bool is_decayed(ParamKind kind) { return kind == ParamKind::ConvWeight; }

std::size_t WeightStore::add(std::string name, ParamKind kind, Shape shape, Scalar fill) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  Param p;
  p.name = name;
  p.kind = kind;
  p.value = Tensor(shape, fill);
  if (is_learnable(kind)) p.grad.assign(p.value.numel(), 0.0f);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t WeightStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? npos : it->second;
}

Param* WeightStore::find(std::string_view name) {
  const auto i = index_of(name);
  return i == npos ? nullptr : &params_[i];
}

const Param* WeightStore::find(std::string_view name) const {
  const auto i = index_of(name);
  return i == npos ? nullptr : &params_[i];
}

std::size_t WeightStore::learnable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) if (is_learnable(p.kind)) n += p.value.numel();
  return n;
}

std::size_t WeightStore::statistic_count() const {
  return value_count() - learnable_count();
}

std::size_t WeightStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void WeightStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

// ---------------------------------------------------------------------------

Network::Network(const NetConfig& config) : config_(config) {
  config_.validate();
  build();
}

Network::Network(const NetConfig& config, std::uint64_t seed) : Network(config) {
  initialize(seed);
  has_weights_ = true;
}

Network Network::architecture(const NetConfig& config) { return Network(config); }

std::pair<int, int> Network::scale_size(int h, int w, int scale) {
  const double f = std::ldexp(1.0, scale);
  return {std::max(1, static_cast<int>(std::lround(h / f))),
          std::max(1, static_cast<int>(std::lround(w / f)))};
}

void Network::build() {
  const int F = config_.feature_dim;
  const int front = config_.front_conv3x3_channels;
  const auto& sets = dense_connections();
  for (int s = 0; s < config_.scales; ++s) {
    EncoderSpec enc;
    enc.scale = s;
    enc.front_channels = front;
    enc.residual_head = config_.variant == Variant::LP && s + 1 < config_.scales;
    const std::string prefix = "s" + std::to_string(s) + ".";
    if (front > 0) {
      enc.front_weight = store_.add(prefix + "front.weight", ParamKind::ConvWeight,
                                    Shape{front, 3, 3, 3});
      enc.front_bias = store_.add(prefix + "front.bias", ParamKind::ConvBias,
                                  Shape{1, front, 1, 1});
    }
    std::array<int, 6> channels{front > 0 ? front : 3, F, F, F, F, 3};
    for (int l = 1; l <= 5; ++l) {
      BlockSpec b;
      b.index = l;
      b.inputs = sets[l - 1];
      for (int k : b.inputs) b.in_channels += channels[k];
      b.out_channels = channels[l];
      b.batch_norm = config_.use_bn && l <= 4;
      b.relu = !(l == 5 && enc.residual_head);
      b.pool_kernel = pooling_kernel(l);
      const std::string name = prefix + "conv" + std::to_string(l);
      b.weight = store_.add(name + ".weight", ParamKind::ConvWeight,
                            Shape{b.out_channels, b.in_channels, 1, 1});
      b.bias = store_.add(name + ".bias", ParamKind::ConvBias,
                          Shape{1, b.out_channels, 1, 1});
      if (b.batch_norm) {
        const std::string bn = prefix + "bn" + std::to_string(l);
        const Shape cs{1, b.out_channels, 1, 1};
        b.gamma = store_.add(bn + ".gamma", ParamKind::BnGamma, cs, 1.0f);
        b.beta = store_.add(bn + ".beta", ParamKind::BnBeta, cs, 0.0f);
        b.running_mean = store_.add(bn + ".running_mean", ParamKind::BnRunningMean, cs, 0.0f);
        b.running_var = store_.add(bn + ".running_var", ParamKind::BnRunningVar, cs, 1.0f);
      }
      enc.blocks.push_back(std::move(b));
    }
    encoders_.push_back(std::move(enc));
  }
  if (config_.scales > 1) {
    fusion_weight_ = store_.add("fusion.weight", ParamKind::ConvWeight,
                                Shape{3, 3 * config_.scales, 1, 1});
    fusion_bias_ = store_.add("fusion.bias", ParamKind::ConvBias, Shape{1, 3, 1, 1});
  }
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto he = [&rng](Tensor& w, int fan_in) {
    std::normal_distribution<Scalar> dist(0.0f, std::sqrt(2.0f / static_cast<Scalar>(fan_in)));
    for (auto& v : w.data()) v = dist(rng);
  };
  for (auto& enc : encoders_) {
    if (enc.front_weight != WeightStore::npos) {
      he(store_[enc.front_weight].value, 3 * 9);
    }
    for (auto& b : enc.blocks) {
      he(store_[b.weight].value, b.in_channels);
      // K heads start near K = 1 (output close to the input image) so the
      // ReLU on the head is active from the first step.
      if (b.index == 5 && !enc.residual_head) store_[b.bias].value.fill(1.0f);
    }
  }
  if (fusion_weight_ != WeightStore::npos) {
    // Start the fusion as the per-channel average of the scales.
    Tensor& w = store_[fusion_weight_].value;
    w.fill(0.0f);
    const int S = config_.scales;
    for (int o = 0; o < 3; ++o) {
      for (int s = 0; s < S; ++s) w[static_cast<std::size_t>(o) * 3 * S + 3 * s + o] = 1.0f / S;
    }
  }
}

void Network::load_weights(const WeightStore& source) {
  for (const auto& p : store_.params()) {
    const Param* q = source.find(p.name);
    if (!q) throw std::invalid_argument("weights: missing tensor '" + p.name + "'");
    if (!(q->value.shape() == p.value.shape())) {
      throw std::invalid_argument("weights: tensor '" + p.name + "' has shape " +
                                  q->value.shape().str() + ", architecture expects " +
                                  p.value.shape().str());
    }
  }
  if (source.size() != store_.size()) {
    for (const auto& q : source.params()) {
      if (store_.index_of(q.name) == WeightStore::npos) {
        throw std::invalid_argument("weights: unexpected tensor '" + q.name + "'");
      }
    }
  }
  for (auto& p : store_.params()) {
    p.value = source.find(p.name)->value;
    std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  }
  has_weights_ = true;
}

// ---------------------------------------------------------------------------

namespace {

// (I - 1) * g, the gradient of J = K (I - 1) + 1 with respect to K.
Tensor k_grad_from_j(const Tensor& input, const Tensor& grad_j) {
  require_same_shape(input.shape(), grad_j.shape(), "k_grad_from_j");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] = grad_j[i] * (input[i] - 1.0f);
  return g;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (src.empty()) return;
  if (dst.empty()) dst = src;
  else add_inplace(dst, src);
}

}  // namespace

Tensor Network::run_encoder(const EncoderSpec& enc, const Tensor& input, Mode mode,
                            EncoderTape* tape) {
  std::array<Tensor, 6> f;
  if (enc.front_channels > 0) {
    Tensor a = relu(conv3x3(input, store_[enc.front_weight].value,
                            store_[enc.front_bias].value));
    if (tape) tape->front_activation = a;
    f[0] = std::move(a);
  } else {
    f[0] = input;
  }
  if (tape) tape->blocks.assign(enc.blocks.size(), BlockTape{});
  for (std::size_t bi = 0; bi < enc.blocks.size(); ++bi) {
    const BlockSpec& b = enc.blocks[bi];
    BlockTape* bt = tape ? &tape->blocks[bi] : nullptr;
    std::vector<const Tensor*> parts;
    for (int k : b.inputs) parts.push_back(&f[k]);
    Tensor cat = parts.size() == 1 ? *parts[0] : concat_channels(parts);
    Tensor x = conv1x1(cat, store_[b.weight].value, store_[b.bias].value);
    if (bt) bt->concat_in = std::move(cat);
    if (b.batch_norm) {
      BatchNormRef ref{store_[b.gamma].value.data(), store_[b.beta].value.data(),
                       store_[b.running_mean].value.data(),
                       store_[b.running_var].value.data()};
      x = batch_norm(x, ref, mode, bt ? &bt->bn : nullptr);
    }
    if (b.relu) {
      for (auto& v : x.data()) v = v > 0.0f ? v : 0.0f;
    }
    if (bt) bt->activation = x;
    if (b.pool_kernel > 1) {
      x = pool(x, b.pool_kernel, config_.pool_mode, bt ? &bt->pool : nullptr);
    }
    f[b.index] = std::move(x);
  }
  return std::move(f[5]);
}

NetOutputs Network::forward(const Tensor& hazy, Mode mode, Tape* tape) {
  if (!has_weights_) throw std::logic_error("network: weights are not loaded");
  if (hazy.c() != 3) {
    throw std::invalid_argument("network: input must have 3 channels, got " +
                                hazy.shape().str());
  }
  const int S = config_.scales;
  NetOutputs out;
  out.inputs.resize(S);
  out.k.resize(S);
  out.j.resize(S);
  out.inputs[0] = hazy;
  for (int s = 1; s < S; ++s) {
    const auto [h, w] = scale_size(hazy.h(), hazy.w(), s);
    out.inputs[s] = bilinear_resize(hazy, h, w);
  }
  if (tape) {
    tape->mode = mode;
    tape->encoders.assign(S, EncoderTape{});
  }
  std::vector<Tensor> heads(S);
  for (int s = 0; s < S; ++s) {
    heads[s] = run_encoder(encoders_[s], out.inputs[s], mode,
                           tape ? &tape->encoders[s] : nullptr);
  }
  if (config_.variant == Variant::LP) {
    out.k[S - 1] = std::move(heads[S - 1]);
    for (int s = S - 2; s >= 0; --s) {
      Tensor k = bilinear_resize(out.k[s + 1], out.inputs[s].h(), out.inputs[s].w());
      add_inplace(k, heads[s]);
      out.k[s] = std::move(k);
    }
  } else {
    for (int s = 0; s < S; ++s) out.k[s] = std::move(heads[s]);
  }
  for (int s = 0; s < S; ++s) out.j[s] = recover_radiance(out.inputs[s], out.k[s], false);

  if (S == 1) {
    out.k_fusion = out.k[0];
    out.j_fusion = out.j[0];
    return out;
  }
  std::vector<Tensor> ups(S);
  std::vector<const Tensor*> parts(S);
  for (int s = 0; s < S; ++s) {
    ups[s] = bilinear_resize(out.k[s], hazy.h(), hazy.w());
    parts[s] = &ups[s];
  }
  out.k_concat = concat_channels(parts);
  out.k_fusion = relu(conv1x1(out.k_concat, store_[fusion_weight_].value,
                              store_[fusion_bias_].value));
  out.j_fusion = recover_radiance(hazy, out.k_fusion, false);
  return out;
}

NetOutputs Network::infer(const Tensor& hazy) const {
  // Eval mode reads BN running statistics and never writes to the store.
  return const_cast<Network*>(this)->forward(hazy, Mode::Eval, nullptr);
}

void Network::backward_encoder(const EncoderSpec& enc, const EncoderTape& tape,
                               const Tensor& input, Tensor grad_head) {
  std::array<Tensor, 6> g;
  g[5] = std::move(grad_head);
  const int F = config_.feature_dim;
  const int c0 = enc.front_channels > 0 ? enc.front_channels : 3;
  auto channels_of = [&](int k) { return k == 0 ? c0 : (k == 5 ? 3 : F); };

  for (int bi = static_cast<int>(enc.blocks.size()) - 1; bi >= 0; --bi) {
    const BlockSpec& b = enc.blocks[bi];
    const BlockTape& bt = tape.blocks[bi];
    Tensor gx = std::move(g[b.index]);
    if (gx.empty()) continue;
    if (b.pool_kernel > 1) gx = pool_backward(bt.pool, gx);
    if (b.relu) relu_backward_inplace(bt.activation, gx);
    if (b.batch_norm) {
      gx = batch_norm_backward(bt.bn, gx, store_[b.gamma].value.data(),
                               store_[b.gamma].grad, store_[b.beta].grad);
    }
    const bool need_input = !(b.index == 1 && enc.front_channels == 0);
    Tensor gin = conv1x1_backward(bt.concat_in, store_[b.weight].value, gx,
                                  store_[b.weight].grad, store_[b.bias].grad, need_input);
    if (!need_input) continue;
    if (b.inputs.size() == 1) {
      accumulate(g[b.inputs[0]], gin);
    } else {
      std::vector<int> counts;
      for (int k : b.inputs) counts.push_back(channels_of(k));
      auto parts = split_channels(gin, counts);
      for (std::size_t i = 0; i < parts.size(); ++i) accumulate(g[b.inputs[i]], parts[i]);
    }
  }
  if (enc.front_channels > 0 && !g[0].empty()) {
    relu_backward_inplace(tape.front_activation, g[0]);
    conv3x3_backward(input, store_[enc.front_weight].value, g[0],
                     store_[enc.front_weight].grad, store_[enc.front_bias].grad, false);
  }
}

void Network::backward(const Tape& tape, const NetOutputs& out,
                       const std::vector<Tensor>& grad_j, const Tensor& grad_j_fusion) {
  const int S = config_.scales;
  if (tape.encoders.size() != static_cast<std::size_t>(S)) {
    throw std::logic_error("network: backward needs a tape recorded by forward");
  }
  if (!grad_j.empty() && grad_j.size() != static_cast<std::size_t>(S)) {
    throw std::invalid_argument("network: expected one J gradient per scale");
  }
  std::vector<Tensor> gk(S);
  for (int s = 0; s < S; ++s) {
    if (!grad_j.empty() && !grad_j[s].empty()) {
      gk[s] = k_grad_from_j(out.inputs[s], grad_j[s]);
    }
  }
  if (!grad_j_fusion.empty()) {
    Tensor gkf = k_grad_from_j(out.inputs[0], grad_j_fusion);
    if (S == 1) {
      accumulate(gk[0], gkf);
    } else {
      relu_backward_inplace(out.k_fusion, gkf);
      Tensor gcat = conv1x1_backward(out.k_concat, store_[fusion_weight_].value, gkf,
                                     store_[fusion_weight_].grad,
                                     store_[fusion_bias_].grad, true);
      std::vector<int> counts(S, 3);
      auto parts = split_channels(gcat, counts);
      for (int s = 0; s < S; ++s) {
        accumulate(gk[s], bilinear_resize_backward(parts[s], out.k[s].h(), out.k[s].w()));
      }
    }
  }
  if (config_.variant == Variant::LP) {
    for (int s = 0; s + 1 < S; ++s) {
      if (gk[s].empty()) continue;
      accumulate(gk[s + 1],
                 bilinear_resize_backward(gk[s], out.k[s + 1].h(), out.k[s + 1].w()));
    }
  }
  for (int s = 0; s < S; ++s) {
    if (gk[s].empty()) continue;
    backward_encoder(encoders_[s], tape.encoders[s], out.inputs[s], std::move(gk[s]));
  }
}

// ---------------------------------------------------------------------------

std::size_t parameter_count(const NetConfig& config) {
  config.validate();
  const std::size_t F = config.feature_dim;
  const std::size_t front = config.front_conv3x3_channels;
  const std::size_t c0 = front > 0 ? front : 3;
  std::size_t per_scale = 0;
  if (front > 0) per_scale += 27 * front + front;
  per_scale += c0 * F + F;          // block 1, input f0
  per_scale += F * F + F;           // block 2, input f1
  per_scale += 2 * F * F + F;       // block 3, inputs f1 f2
  per_scale += 2 * F * F + F;       // block 4, inputs f2 f3
  per_scale += 4 * F * 3 + 3;       // block 5, inputs f1..f4
  if (config.use_bn) per_scale += 4 * 2 * F;
  std::size_t total = per_scale * config.scales;
  if (config.scales > 1) total += 3 * config.scales * 3 + 3;
  return total;
}

FlopReport count_flops(const NetConfig& config, int h, int w) {
  const Network arch = Network::architecture(config);
  FlopReport r;
  const std::uint64_t full = static_cast<std::uint64_t>(h) * w;
  for (const auto& enc : arch.encoders()) {
    const auto [hs, ws] = Network::scale_size(h, w, enc.scale);
    const std::uint64_t P = static_cast<std::uint64_t>(hs) * ws;
    const std::string prefix = "s" + std::to_string(enc.scale) + ".";
    if (enc.scale > 0) {
      LayerFlops l{prefix + "downsample", 0, 0, 4 * 3 * P};
      r.resize_ops += l.other_ops;
      r.layers.push_back(l);
    }
    if (enc.front_channels > 0) {
      const std::uint64_t co = enc.front_channels;
      LayerFlops l{prefix + "front3x3", P * 9 * 3 * co, P * co, P * co};
      r.conv_macs += l.macs;
      r.bias_adds += l.bias_adds;
      r.relu_ops += P * co;
      r.layers.push_back(l);
    }
    for (const auto& b : enc.blocks) {
      const std::uint64_t ci = b.in_channels;
      const std::uint64_t co = b.out_channels;
      LayerFlops l{prefix + "block" + std::to_string(b.index), P * ci * co, P * co, 0};
      if (b.batch_norm) { r.bn_ops += 2 * P * co; l.other_ops += 2 * P * co; }
      if (b.relu) { r.relu_ops += P * co; l.other_ops += P * co; }
      if (b.pool_kernel > 1) {
        const std::uint64_t k2 = static_cast<std::uint64_t>(b.pool_kernel) * b.pool_kernel;
        r.pool_ops += P * co * k2;
        l.other_ops += P * co * k2;
      }
      r.conv_macs += l.macs;
      r.bias_adds += l.bias_adds;
      r.layers.push_back(l);
    }
  }
  if (config.scales > 1) {
    const std::uint64_t S = config.scales;
    LayerFlops up{"upsample", 0, 0, 4 * 3 * full * (S - 1)};
    r.resize_ops += up.other_ops;
    r.layers.push_back(up);
    LayerFlops fusion{"fusion", full * 3 * S * 3, full * 3, full * 3};
    r.conv_macs += fusion.macs;
    r.bias_adds += fusion.bias_adds;
    r.relu_ops += full * 3;
    r.layers.push_back(fusion);
  }
  return r;
}

int encoder_receptive_field(const std::vector<BlockSpec>& blocks, bool front_conv3x3) {
  std::array<int, 6> rf{};
  rf[0] = front_conv3x3 ? 3 : 1;
  for (const auto& b : blocks) {
    int widest = 0;
    for (int k : b.inputs) widest = std::max(widest, rf[k]);
    rf[b.index] = widest + b.pool_kernel - 1;
  }
  return rf[5];
}

int receptive_field(const Network& net) {
  int best = 0;
  for (const auto& enc : net.encoders()) {
    const int local = encoder_receptive_field(enc.blocks, enc.front_channels > 0);
    best = std::max(best, local << enc.scale);
  }
  return best;
}

int receptive_field(const NetConfig& config) {
  return receptive_field(Network::architecture(config));
}

}  // namespace famed
