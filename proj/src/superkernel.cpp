#include "spnas/superkernel.hpp"

#include <cmath>

#include "spnas/ops.hpp"

namespace spnas {

void IndicatorConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("indicator temperature must be positive, got " +
                                std::to_string(temperature));
  }
}

std::string to_string(IndicatorMode mode) {
  return mode == IndicatorMode::relaxed ? "relaxed" : "straight_through";
}

IndicatorMode indicator_mode_from_string(const std::string& s) {
  if (s == "straight_through") return IndicatorMode::straight_through;
  if (s == "relaxed") return IndicatorMode::relaxed;
  throw std::invalid_argument("unknown indicator mode '" + s + "'");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double indicator_value(double norm_sq, double threshold, const IndicatorConfig& cfg) {
  if (cfg.mode == IndicatorMode::straight_through) return norm_sq > threshold ? 1.0 : 0.0;
  return sigmoid((norm_sq - threshold) / cfg.temperature);
}

Tensor indicator(Tape& tape, const Tensor& norm_sq, const Tensor& threshold,
                 const IndicatorConfig& cfg) {
  cfg.validate();
  if (norm_sq.numel() != 1 || threshold.numel() != 1) {
    throw ShapeError("indicator: norm and threshold must be scalars");
  }
  const bool track = tape.needs_grad({&norm_sq, &threshold});
  Tensor out = tape.make_output({1}, track);
  out.mutable_data()[0] = indicator_value(norm_sq[0], threshold[0], cfg);
  if (track) {
    const double tau = cfg.temperature;
    tape.record(out, [norm_sq, threshold, out, tau]() mutable {
      const double s = sigmoid((norm_sq[0] - threshold[0]) / tau);
      const double slope = s * (1.0 - s) / tau * out.grad()[0];
      if (norm_sq.requires_grad()) norm_sq.mutable_grad()[0] += slope;
      if (threshold.requires_grad()) threshold.mutable_grad()[0] -= slope;
    });
  }
  return out;
}

LayerDecision LayerDecision::mbconv(int kernel, int expansion) {
  if (kernel != 3 && kernel != 5) {
    throw std::invalid_argument("kernel size must be 3 or 5, got " + std::to_string(kernel));
  }
  if (expansion != 3 && expansion != 6) {
    throw std::invalid_argument("expansion must be 3 or 6, got " + std::to_string(expansion));
  }
  return LayerDecision(false, kernel, expansion);
}

std::string LayerDecision::to_string() const {
  if (skip_) return "skip";
  return std::to_string(kernel_) + "x" + std::to_string(expansion_);
}

LayerDecision LayerDecision::parse(const std::string& s) {
  if (s == "skip") return skip();
  if (s.size() == 3 && s[1] == 'x') return mbconv(s[0] - '0', s[2] - '0');
  throw std::invalid_argument("cannot parse layer decision '" + s + "'");
}

std::vector<LayerDecision> candidate_decisions(bool skip_allowed) {
  std::vector<LayerDecision> out;
  if (skip_allowed) out.push_back(LayerDecision::skip());
  for (int k : {3, 5})
    for (int e : {3, 6}) out.push_back(LayerDecision::mbconv(k, e));
  return out;
}

HardGates HardGates::from_decision(const LayerDecision& d) {
  if (d.is_skip()) return {false, false, false};
  return {d.kernel() == 5, true, d.expansion() == 6};
}

namespace {

constexpr std::size_t kPlane = SuperKernel::kKernel * SuperKernel::kKernel;

bool in_subset(Subset subset, std::size_t flat, std::size_t channels) {
  const std::size_t c = flat / kPlane;
  const std::size_t r = (flat % kPlane) / SuperKernel::kKernel;
  const std::size_t q = flat % SuperKernel::kKernel;
  const bool inner = r >= 1 && r <= 3 && q >= 1 && q <= 3;
  switch (subset) {
    case Subset::inner: return inner;
    case Subset::shell: return !inner;
    case Subset::first_half: return c < channels / 2;
    case Subset::second_half: return c >= channels / 2;
  }
  return false;
}

std::vector<std::uint8_t> subset_mask(Subset subset, std::size_t channels) {
  std::vector<std::uint8_t> m(channels * kPlane);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = in_subset(subset, i, channels) ? 1 : 0;
  return m;
}

std::size_t checked_channels(const Tensor& storage) {
  if (storage.rank() != 3 || storage.dim(1) != SuperKernel::kKernel ||
      storage.dim(2) != SuperKernel::kKernel) {
    throw ShapeError("weight view needs a [C,5,5] block, got " + shape_str(storage.shape()));
  }
  return storage.dim(0);
}

}  // namespace

WeightView::WeightView(Tensor storage, Subset subset)
    : storage_(std::move(storage)), subset_(subset), channels_(checked_channels(storage_)) {}

bool WeightView::contains(std::size_t flat_index) const {
  return flat_index < storage_.numel() && in_subset(subset_, flat_index, channels_);
}

std::size_t WeightView::size() const {
  switch (subset_) {
    case Subset::inner: return channels_ * 9;
    case Subset::shell: return channels_ * 16;
    case Subset::first_half: return (channels_ / 2) * kPlane;
    case Subset::second_half: return (channels_ - channels_ / 2) * kPlane;
  }
  return 0;
}

std::vector<std::uint8_t> WeightView::mask() const { return subset_mask(subset_, channels_); }

double WeightView::norm_sq() const {
  double acc = 0.0;
  auto d = storage_.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (in_subset(subset_, i, channels_)) acc += d[i] * d[i];
  return acc;
}

void WeightView::fill(double value) {
  auto d = storage_.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (in_subset(subset_, i, channels_)) d[i] = value;
}

void WeightView::scale(double factor) {
  auto d = storage_.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (in_subset(subset_, i, channels_)) d[i] *= factor;
}

Tensor group_norm_sq(Tape& tape, const WeightView& view) {
  return ops::masked_sum_sq(tape, view.storage(), view.mask());
}

LayerDecision decide(bool k5, bool e3, bool e6, bool skip_allowed) {
  if (!e3 && skip_allowed) return LayerDecision::skip();
  return LayerDecision::mbconv(k5 ? 5 : 3, e6 ? 6 : 3);
}

LayerDecision decide_from_norms(double norm_shell, double norm_half3, double norm_half6,
                                double t_k5, double t_e3, double t_e6, bool skip_allowed) {
  return decide(norm_shell > t_k5, norm_half3 > t_e3, norm_half6 > t_e6, skip_allowed);
}

SuperKernel::SuperKernel(std::size_t channels, bool skip_allowed, std::size_t layer_index)
    : channels_(channels),
      skip_allowed_(skip_allowed),
      layer_index_(layer_index),
      weights_({channels, kKernel, kKernel}, true),
      t_k5_(Tensor::scalar(0.0, true)),
      t_e3_(Tensor::scalar(0.0, true)),
      t_e6_(Tensor::scalar(0.0, true)) {
  if (channels == 0 || channels % 2 != 0) {
    throw ShapeError("superkernel channel count must be positive and even, got " +
                     std::to_string(channels));
  }
  shell_mask_ = subset_mask(Subset::shell, channels);
  half3_mask_ = subset_mask(Subset::first_half, channels);
  half6_mask_ = subset_mask(Subset::second_half, channels);
}

void SuperKernel::initialize(std::mt19937_64& rng) {
  // He-uniform over a 5x5 fan-in; a relu6 follows the depthwise stage.
  const double bound = std::sqrt(6.0 / static_cast<double>(kPlane));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : weights_.mutable_data()) v = dist(rng);
  init_thresholds();
}

void SuperKernel::init_thresholds() {
  const DecisionSnapshot s = [this] {
    // Norms with every gate open.
    DecisionSnapshot snap;
    auto d = weights_.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double sq = d[i] * d[i];
      if (shell_mask_[i]) snap.norm_sq_shell += sq;
      if (half3_mask_[i]) snap.norm_sq_half3 += sq;
      if (half6_mask_[i]) snap.norm_sq_half6 += sq;
    }
    return snap;
  }();
  t_k5_.mutable_data()[0] = 0.5 * s.norm_sq_shell;
  t_e3_.mutable_data()[0] = 0.5 * s.norm_sq_half3;
  t_e6_.mutable_data()[0] = 0.5 * s.norm_sq_half6;
}

SuperKernel::Output SuperKernel::evaluate(Tape& tape, const IndicatorConfig& cfg,
                                          const GateOverride& over) const {
  cfg.validate();
  if (over.pinned && !over.pinned->e3 && !skip_allowed_) {
    throw std::invalid_argument("layer " + std::to_string(layer_index_) +
                                " cannot be pinned to skip");
  }
  auto constant = [](double v) { return Tensor::scalar(v); };
  Output out;
  LayerGates& g = out.gates;

  Tensor n_shell = ops::masked_sum_sq(tape, weights_, shell_mask_);
  g.norm_sq_shell = n_shell[0];
  if (over.pinned) {
    g.k5 = constant(over.pinned->k5 ? 1.0 : 0.0);
  } else if (over.dropout.shell) {
    g.k5 = constant(0.0);
  } else {
    g.k5 = indicator(tape, n_shell, t_k5_, cfg);
  }
  Tensor w_k = ops::scale_masked(tape, weights_, shell_mask_, g.k5);

  Tensor n_half3 = ops::masked_sum_sq(tape, w_k, half3_mask_);
  Tensor n_half6 = ops::masked_sum_sq(tape, w_k, half6_mask_);
  g.norm_sq_half3 = n_half3[0];
  g.norm_sq_half6 = n_half6[0];
  if (over.pinned) {
    g.e3 = constant(over.pinned->e3 ? 1.0 : 0.0);
    g.e6 = constant(over.pinned->e6 ? 1.0 : 0.0);
  } else {
    g.e3 = skip_allowed_ ? indicator(tape, n_half3, t_e3_, cfg) : constant(1.0);
    g.e6 = over.dropout.half6 ? constant(0.0) : indicator(tape, n_half6, t_e6_, cfg);
  }
  Tensor w_e = ops::scale_masked(tape, w_k, half6_mask_, g.e6);
  out.kernel = ops::scale(tape, w_e, g.e3);
  return out;
}

DecisionSnapshot SuperKernel::derive_decision() const {
  DecisionSnapshot s;
  auto d = weights_.data();
  double inner_half3 = 0.0, inner_half6 = 0.0, shell_half3 = 0.0, shell_half6 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double sq = d[i] * d[i];
    if (shell_mask_[i]) {
      s.norm_sq_shell += sq;
      (half3_mask_[i] ? shell_half3 : shell_half6) += sq;
    } else {
      (half3_mask_[i] ? inner_half3 : inner_half6) += sq;
    }
  }
  s.t_k5 = t_k5_[0];
  s.t_e3 = t_e3_[0];
  s.t_e6 = t_e6_[0];
  const bool k5 = s.norm_sq_shell > s.t_k5;
  s.norm_sq_half3 = k5 ? inner_half3 + shell_half3 : inner_half3;
  s.norm_sq_half6 = k5 ? inner_half6 + shell_half6 : inner_half6;
  const bool e3 = !skip_allowed_ || s.norm_sq_half3 > s.t_e3;
  const bool e6 = s.norm_sq_half6 > s.t_e6;
  s.ind_k5 = k5 ? 1.0 : 0.0;
  s.ind_e3 = e3 ? 1.0 : 0.0;
  s.ind_e6 = e6 ? 1.0 : 0.0;
  s.derived = decide(k5, e3, e6, skip_allowed_);
  return s;
}

Tensor superkernel_forward(Tape& tape, const Tensor& x, const SuperKernel& sk, int stride,
                           const IndicatorConfig& cfg, const GateOverride& over) {
  if (x.rank() != 4 || x.dim(1) != sk.channels()) {
    throw ShapeError("superkernel_forward: input dimension 1 (channels) is " +
                     (x.rank() == 4 ? std::to_string(x.dim(1)) : shape_str(x.shape())) +
                     ", expected " + std::to_string(sk.channels()));
  }
  return ops::conv2d_depthwise(tape, x, sk.effective_kernel(tape, cfg, over), stride);
}

DropoutMask subset_dropout(double p_shell, double p_half6, std::mt19937_64& rng) {
  if (!(p_shell >= 0.0 && p_shell <= 1.0) || !(p_half6 >= 0.0 && p_half6 <= 1.0)) {
    throw std::invalid_argument("dropout probabilities must lie in [0, 1]");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng);
  const double b = u(rng);
  return {a < p_shell, b < p_half6};
}

}  // namespace spnas
