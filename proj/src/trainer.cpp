#include "famed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <mutex>
#include <sstream>

#include <malloc.h>

#include "famed/log.hpp"
#include "famed/ops.hpp"
#include "famed/weight_io.hpp"

namespace famed {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (crop < 1) throw std::invalid_argument("crop must be >= 1");
  if (total_iters < 0) throw std::invalid_argument("total_iters must be >= 0");
  if (!(lr0 >= 0.0) || !(lr_drop_factor >= 0.0) || !(momentum >= 0.0) ||
      !(weight_decay >= 0.0) || !(alpha_fusion >= 0.0)) {
    throw std::invalid_argument("rates and loss weights must be nonnegative");
  }
  for (double a : alpha_scales) {
    if (!(a >= 0.0)) throw std::invalid_argument("loss weights must be nonnegative");
  }
  double prev = 0.0;
  for (double p : lr_drop_points) {
    if (!(p > prev && p < 1.0)) {
      throw std::invalid_argument("lr drop points must be strictly increasing in (0,1)");
    }
    prev = p;
  }
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "batch=" << batch_size << " crop=" << crop << " lr0=" << lr0 << " drops=";
  for (std::size_t i = 0; i < lr_drop_points.size(); ++i) {
    os << (i ? "," : "") << lr_drop_points[i];
  }
  os << " drop_factor=" << lr_drop_factor << " momentum=" << momentum
     << " weight_decay=" << weight_decay << " alpha_s=";
  for (std::size_t i = 0; i < alpha_scales.size(); ++i) {
    os << (i ? "," : "") << alpha_scales[i];
  }
  os << " alpha_fusion=" << alpha_fusion << " iters=" << total_iters << " seed=" << seed;
  return os.str();
}

// ---------------------------------------------------------------------------

L2Result l2_loss(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred.shape(), gt.shape(), "l2_loss");
  L2Result r;
  r.grad = Tensor(pred.shape());
  const std::size_t n = pred.numel();
  if (n == 0) return r;
  const Scalar scale = 2.0f / static_cast<Scalar>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - gt[i];
    sum += d * d;
    r.grad[i] = scale * static_cast<Scalar>(d);
  }
  r.value = sum / static_cast<double>(n);
  return r;
}

LossResult multiscale_loss(const NetOutputs& outputs, const Tensor& clear,
                           const std::vector<double>& alpha_scales, double alpha_fusion) {
  const std::size_t S = outputs.j.size();
  if (S == 0 || outputs.j_fusion.empty()) {
    throw std::invalid_argument("multiscale_loss: outputs are missing J_fusion or scale outputs");
  }
  if (alpha_scales.size() < S) {
    throw std::invalid_argument("multiscale_loss: " + std::to_string(S) +
                                " scale outputs but only " +
                                std::to_string(alpha_scales.size()) + " loss weights");
  }
  LossResult r;
  r.grad_j.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const Tensor& js = outputs.j[s];
    if (js.empty()) {
      throw std::invalid_argument("multiscale_loss: missing output for scale " + std::to_string(s));
    }
    const Tensor target = bilinear_resize(clear, js.h(), js.w());
    L2Result l = l2_loss(js, target);
    r.scale_terms.push_back(l.value);
    r.value += alpha_scales[s] * l.value;
    for (auto& g : l.grad.data()) g *= static_cast<Scalar>(alpha_scales[s]);
    r.grad_j[s] = std::move(l.grad);
  }
  L2Result f = l2_loss(outputs.j_fusion, clear);
  r.fusion_term = f.value;
  r.value += alpha_fusion * f.value;
  for (auto& g : f.grad.data()) g *= static_cast<Scalar>(alpha_fusion);
  r.grad_j_fusion = std::move(f.grad);
  return r;
}

// ---------------------------------------------------------------------------

void sgd_step(WeightStore& weights, OptimizerState& state, double lr,
              double momentum, double weight_decay) {
  auto& params = weights.params();
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (is_learnable(params[i].kind)) state.velocity[i].assign(params[i].value.numel(), 0.0f);
    }
  }
  const Scalar m = static_cast<Scalar>(momentum);
  const Scalar rate = static_cast<Scalar>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    if (!is_learnable(p.kind)) continue;
    auto& v = state.velocity[i];
    if (v.size() != p.value.numel() || p.grad.size() != p.value.numel()) {
      throw std::invalid_argument("sgd_step: buffer shape mismatch for " + p.name);
    }
    const Scalar wd = is_decayed(p.kind) ? static_cast<Scalar>(weight_decay) : 0.0f;
    Scalar* w = p.value.raw();
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = m * v[k] - rate * (p.grad[k] + wd * w[k]);
      w[k] += v[k];
    }
  }
  ++state.iteration;
}

double lr_schedule(std::int64_t iter, const TrainConfig& config) {
  double lr = config.lr0;
  for (double point : config.lr_drop_points) {
    const auto boundary =
        static_cast<std::int64_t>(std::llround(point * static_cast<double>(config.total_iters)));
    if (iter >= boundary) lr *= config.lr_drop_factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::vector<const ImagePair*> pairs, int crop, std::uint64_t seed)
    : crop_(crop), rng_(seed) {
  for (const ImagePair* p : pairs) {
    if (p->hazy.h() < crop || p->hazy.w() < crop) {
      log::warn("sampler: skipping '" + p->name + "' (" + p->hazy.shape().str() +
                ") smaller than the " + std::to_string(crop) + "px crop");
      continue;
    }
    require_same_shape(p->hazy.shape(), p->clear.shape(), "sampler pair");
    pairs_.push_back(p);
  }
  std::stable_sort(pairs_.begin(), pairs_.end(),
                   [](const ImagePair* a, const ImagePair* b) { return a->name < b->name; });
}

BatchSampler::BatchSampler(const std::vector<ImagePair>& pairs, int crop, std::uint64_t seed)
    : BatchSampler(
          [&pairs] {
            std::vector<const ImagePair*> v;
            for (const auto& p : pairs) v.push_back(&p);
            return v;
          }(),
          crop, seed) {}

BatchSampler::Draw BatchSampler::draw() {
  if (pairs_.empty()) throw std::runtime_error("sampler: no usable training pairs");
  Draw d;
  d.pair = std::uniform_int_distribution<std::size_t>(0, pairs_.size() - 1)(rng_);
  const ImagePair& p = *pairs_[d.pair];
  d.y = std::uniform_int_distribution<int>(0, p.hazy.h() - crop_)(rng_);
  d.x = std::uniform_int_distribution<int>(0, p.hazy.w() - crop_)(rng_);
  return d;
}

std::pair<Tensor, Tensor> BatchSampler::next(int batch) {
  Tensor hazy(Shape{batch, 3, crop_, crop_});
  Tensor clear(Shape{batch, 3, crop_, crop_});
  for (int b = 0; b < batch; ++b) {
    const Draw d = draw();
    const ImagePair& p = *pairs_[d.pair];
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < crop_; ++y) {
        const std::size_t src = static_cast<std::size_t>(d.y + y) * p.hazy.w() + d.x;
        std::copy_n(p.hazy.plane(0, c) + src, crop_, &hazy.at(b, c, y, 0));
        std::copy_n(p.clear.plane(0, c) + src, crop_, &clear.at(b, c, y, 0));
      }
    }
  }
  return {std::move(hazy), std::move(clear)};
}

// ---------------------------------------------------------------------------

double smoothed_loss(const std::vector<LossRecord>& curve, std::size_t window, bool from_start) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::min(window, curve.size());
  double s = 0.0;
  if (from_start) {
    for (std::size_t i = 0; i < n; ++i) s += curve[i].loss;
  } else {
    for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].loss;
  }
  return s / static_cast<double>(n);
}

void write_loss_csv(const std::vector<LossRecord>& curve, const std::string& path) {
  std::ostringstream os;
  os << "iter,lr,loss\n" << std::setprecision(9);
  for (const auto& r : curve) os << r.iter << ',' << r.lr << ',' << r.loss << '\n';
  write_file_atomic(path, os.str());
}

namespace {

// Activation buffers are tens of MB and reallocated every iteration; keep
// them on the heap instead of paying mmap + page faults each time.
void keep_large_allocations() {
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

}  // namespace

TrainResult train(const std::vector<ImagePair>& dataset, const NetConfig& net_config,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult result{Network(net_config, config.seed), {}};
  if (config.total_iters == 0) return result;

  keep_large_allocations();
  Network& net = result.net;
  BatchSampler sampler(dataset, config.crop, config.seed ^ 0x9e3779b97f4a7c15ULL);
  if (sampler.usable() == 0) {
    throw std::invalid_argument("train: no image is at least " + std::to_string(config.crop) +
                                " pixels on both sides");
  }
  OptimizerState opt;
  result.curve.reserve(static_cast<std::size_t>(config.total_iters));

  for (std::int64_t it = 0; it < config.total_iters; ++it) {
    const double lr = lr_schedule(it, config);
    auto [hazy, clear] = sampler.next(config.batch_size);
    Tape tape;
    NetOutputs out = net.forward(hazy, Mode::Train, &tape);
    LossResult loss = multiscale_loss(out, clear, config);
    if (!std::isfinite(loss.value)) {
      std::string where;
      if (!config.checkpoint_path.empty()) {
        where = config.checkpoint_path + ".nan";
        save_weights(net, where);
      }
      throw TrainingDiverged("train: non-finite loss at iteration " + std::to_string(it) +
                             (where.empty() ? "" : "; diagnostic checkpoint " + where));
    }
    net.weights().zero_grad();
    net.backward(tape, out, loss.grad_j, loss.grad_j_fusion);
    sgd_step(net.weights(), opt, lr, config.momentum, config.weight_decay);

    LossRecord rec{it, lr, loss.value};
    result.curve.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        (it + 1) % config.checkpoint_every == 0) {
      save_weights(net, config.checkpoint_path);
      if (!config.loss_log_path.empty()) write_loss_csv(result.curve, config.loss_log_path);
    }
  }
  if (!config.loss_log_path.empty()) write_loss_csv(result.curve, config.loss_log_path);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<std::string> GradientCheckReport::flagged() const {
  std::vector<std::string> names;
  for (const auto& t : tensors) {
    if (!(t.max_rel_error < tolerance)) names.push_back(t.name);
  }
  return names;
}

namespace {

// Which side of every kink the forward pass landed on: ReLU masks, max-pool
// winners and the fusion ReLU. Two evaluations with equal patterns lie on
// the same smooth piece of the loss.
std::vector<std::uint32_t> kink_pattern(const Network& net, const Tape& tape,
                                        const NetOutputs& out) {
  std::vector<std::uint32_t> pat;
  for (std::size_t s = 0; s < tape.encoders.size(); ++s) {
    const EncoderTape& et = tape.encoders[s];
    for (Scalar v : et.front_activation.data()) pat.push_back(v > 0.0f);
    const auto& blocks = net.encoders()[s].blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const BlockTape& bt = et.blocks[b];
      if (blocks[b].relu) {
        for (Scalar v : bt.activation.data()) pat.push_back(v > 0.0f);
      }
      pat.insert(pat.end(), bt.pool.argmax.begin(), bt.pool.argmax.end());
    }
  }
  if (net.scales() > 1) {
    for (Scalar v : out.k_fusion.data()) pat.push_back(v > 0.0f);
  }
  return pat;
}

}  // namespace

GradientCheckReport gradient_check(Network& net, const Tensor& hazy, const Tensor& clear,
                                   const GradientCheckOptions& options) {
  WeightStore& store = net.weights();
  const std::vector<double> alphas(net.scales(), 1.0);

  // Running statistics change on every train-mode pass; keep them fixed.
  std::vector<Tensor> saved_stats;
  for (const auto& p : store.params()) {
    if (!is_learnable(p.kind)) saved_stats.push_back(p.value);
  }
  auto restore_stats = [&] {
    std::size_t k = 0;
    for (auto& p : store.params()) {
      if (!is_learnable(p.kind)) p.value = saved_stats[k++];
    }
  };
  auto loss_at = [&](std::vector<std::uint32_t>* pattern) {
    Tape t;
    NetOutputs o = net.forward(hazy, options.mode, &t);
    restore_stats();
    *pattern = kink_pattern(net, t, o);
    return multiscale_loss(o, clear, alphas, 1.0).value;
  };

  Tape tape;
  NetOutputs out = net.forward(hazy, options.mode, &tape);
  restore_stats();
  LossResult loss = multiscale_loss(out, clear, alphas, 1.0);
  const std::vector<std::uint32_t> base_pattern = kink_pattern(net, tape, out);
  store.zero_grad();
  net.backward(tape, out, loss.grad_j, loss.grad_j_fusion);
  if (options.tamper) options.tamper(store);

  GradientCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  for (auto& p : store.params()) {
    if (!is_learnable(p.kind)) continue;
    TensorCheck tc;
    tc.name = p.name;
    std::vector<std::size_t> indices(p.value.numel());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (indices.size() > options.max_per_tensor) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_per_tensor);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t idx : indices) {
      Scalar& w = p.value[idx];
      const Scalar original = w;
      // Central differences are only meaningful when both probes stay on
      // the base point's smooth piece; shrink the step once, then give up
      // on the entry.
      std::optional<double> numeric;
      for (double step : {options.step, options.step * 0.1}) {
        const Scalar plus = original + static_cast<Scalar>(step);
        const Scalar minus = original - static_cast<Scalar>(step);
        std::vector<std::uint32_t> pat_plus, pat_minus;
        w = plus;
        const double lp = loss_at(&pat_plus);
        w = minus;
        const double lm = loss_at(&pat_minus);
        w = original;
        if (pat_plus == base_pattern && pat_minus == base_pattern) {
          numeric = (lp - lm) / (static_cast<double>(plus) - minus);
          break;
        }
      }
      if (!numeric) {
        ++tc.skipped;
        continue;
      }
      const double analytic = p.grad[idx];
      const double abs_err = std::abs(analytic - *numeric);
      const double denom = std::max({std::abs(analytic), std::abs(*numeric),
                                     options.denominator_floor});
      tc.max_abs_error = std::max(tc.max_abs_error, abs_err);
      tc.max_rel_error = std::max(tc.max_rel_error, abs_err / denom);
      ++tc.checked;
    }
    report.skipped += tc.skipped;
    if (tc.max_rel_error > report.max_rel_error || report.worst_tensor.empty()) {
      if (tc.max_rel_error >= report.max_rel_error) {
        report.max_rel_error = tc.max_rel_error;
        report.worst_tensor = tc.name;
      }
    }
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

}  // namespace famed
