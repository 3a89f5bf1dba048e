#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spnas/tensor.hpp"

namespace spnas {

enum class IndicatorMode {
  straight_through,  // hard 1(x > t) forward, sigmoid gradient backward
  relaxed,           // sigmoid forward and backward
};

struct IndicatorConfig {
  double temperature = 1.0;
  IndicatorMode mode = IndicatorMode::straight_through;

  void validate() const;
  friend bool operator==(const IndicatorConfig&, const IndicatorConfig&) = default;
};

std::string to_string(IndicatorMode mode);
IndicatorMode indicator_mode_from_string(const std::string& s);

double sigmoid(double z);

/// Gate value for a single comparison, forward only. Ties select nothing.
double indicator_value(double norm_sq, double threshold, const IndicatorConfig& cfg);

/// Differentiable gate over scalar tensors. Backward always uses
/// d/dx sigmoid((x - t) / tau); the gradient w.r.t. t is its negation.
Tensor indicator(Tape& tape, const Tensor& norm_sq, const Tensor& threshold,
                 const IndicatorConfig& cfg);

/// Per-layer discrete operation: skip, or MBConv with kernel k and expansion e.
class LayerDecision {
 public:
  static LayerDecision skip() { return LayerDecision(true, 0, 0); }
  static LayerDecision mbconv(int kernel, int expansion);

  bool is_skip() const { return skip_; }
  int kernel() const { return kernel_; }
  int expansion() const { return expansion_; }

  /// "skip", or "<k>x<e>" such as "5x6".
  std::string to_string() const;
  static LayerDecision parse(const std::string& s);

  friend bool operator==(const LayerDecision&, const LayerDecision&) = default;

 private:
  LayerDecision(bool skip, int k, int e) : skip_(skip), kernel_(k), expansion_(e) {}
  bool skip_;
  int kernel_;
  int expansion_;
};

/// The five candidates in canonical order: skip, 3x3, 3x6, 5x3, 5x6.
std::vector<LayerDecision> candidate_decisions(bool skip_allowed);

/// Hard gate pattern, used to pin a layer to one candidate.
struct HardGates {
  bool k5 = true;
  bool e3 = true;
  bool e6 = true;

  static HardGates from_decision(const LayerDecision& d);
  friend bool operator==(const HardGates&, const HardGates&) = default;
};

/// Subsets dropped for one step.
struct DropoutMask {
  bool shell = false;
  bool half6 = false;
};

enum class Subset {
  inner,        // center 3x3 of every 5x5 filter
  shell,        // 5x5 minus the center 3x3
  first_half,   // channels [0, C/2): the e=3 filters
  second_half,  // channels [C/2, C): added by e=6
};

/// Aliasing view of a subset of a [C,5,5] weight block. Never copies storage.
class WeightView {
 public:
  WeightView(Tensor storage, Subset subset);

  Subset subset() const { return subset_; }
  const Tensor& storage() const { return storage_; }
  bool contains(std::size_t flat_index) const;
  std::size_t size() const;
  std::vector<std::uint8_t> mask() const;

  double norm_sq() const;
  /// Writes `value` into every element of the subset in the shared storage.
  void fill(double value);
  /// Multiplies every element of the subset in place.
  void scale(double factor);

 private:
  Tensor storage_;
  Subset subset_;
  std::size_t channels_;
};

/// Sum of squares over a subset; differentiable w.r.t. the underlying weights.
Tensor group_norm_sq(Tape& tape, const WeightView& view);

/// Gate tensors of one layer for one forward pass.
struct LayerGates {
  Tensor k5, e3, e6;
  double norm_sq_shell = 0.0;
  double norm_sq_half3 = 0.0;
  double norm_sq_half6 = 0.0;
};

struct DecisionSnapshot {
  double norm_sq_shell = 0.0;
  double norm_sq_half3 = 0.0;
  double norm_sq_half6 = 0.0;
  double t_k5 = 0.0;
  double t_e3 = 0.0;
  double t_e6 = 0.0;
  double ind_k5 = 0.0;
  double ind_e3 = 0.0;
  double ind_e6 = 0.0;
  LayerDecision derived = LayerDecision::skip();
};

/// Decision tree over hard gates: e3 closed means skip regardless of the rest.
LayerDecision decide(bool k5, bool e3, bool e6, bool skip_allowed);

/// Hard decision from precomputed norms and thresholds (strict comparisons).
LayerDecision decide_from_norms(double norm_shell, double norm_half3, double norm_half6,
                                double t_k5, double t_e3, double t_e6, bool skip_allowed);

/// Per-step overrides: pinned hard gates and/or dropped subsets.
struct GateOverride {
  std::optional<HardGates> pinned;
  DropoutMask dropout;
};

/// One shared depthwise weight block [C, 5, 5] with three trainable thresholds.
///
/// Channel halves correspond to the e=3 filters and the extra e=6 filters; the
/// 5x5 ring outside the center 3x3 is the kernel-size subset. The effective
/// kernel is
///   w_k   = inner + g_k5 * shell
///   w_eff = g_e3 * (half3(w_k) + g_e6 * half6(w_k))
/// with g_k5 gated on ||shell||^2 and g_e3 / g_e6 gated on the half norms of w_k.
/// Layers that cannot be skipped hold g_e3 at 1.
class SuperKernel {
 public:
  static constexpr std::size_t kKernel = 5;

  SuperKernel(std::size_t channels, bool skip_allowed, std::size_t layer_index);

  std::size_t channels() const { return channels_; }
  bool skip_allowed() const { return skip_allowed_; }
  std::size_t layer_index() const { return layer_index_; }

  Tensor& weights() { return weights_; }
  const Tensor& weights() const { return weights_; }
  Tensor& t_k5() { return t_k5_; }
  Tensor& t_e3() { return t_e3_; }
  Tensor& t_e6() { return t_e6_; }
  const Tensor& t_k5() const { return t_k5_; }
  const Tensor& t_e3() const { return t_e3_; }
  const Tensor& t_e6() const { return t_e6_; }

  WeightView view(Subset subset) const { return WeightView(weights_, subset); }

  /// Fan-in scaled uniform weights, then thresholds at half the initial norms.
  void initialize(std::mt19937_64& rng);
  /// t = 0.5 * current norm of the paired subset.
  void init_thresholds();

  struct Output {
    LayerGates gates;
    Tensor kernel;
  };
  Output evaluate(Tape& tape, const IndicatorConfig& cfg, const GateOverride& over = {}) const;

  Tensor effective_kernel(Tape& tape, const IndicatorConfig& cfg,
                          const GateOverride& over = {}) const {
    return evaluate(tape, cfg, over).kernel;
  }

  /// Hard-mode decision at the current weights and thresholds.
  DecisionSnapshot derive_decision() const;

 private:
  std::size_t channels_;
  bool skip_allowed_;
  std::size_t layer_index_;
  Tensor weights_;
  Tensor t_k5_, t_e3_, t_e6_;
  std::vector<std::uint8_t> shell_mask_, half3_mask_, half6_mask_;
};

/// o = conv_depthwise(x, effective kernel, stride).
Tensor superkernel_forward(Tape& tape, const Tensor& x, const SuperKernel& sk, int stride,
                           const IndicatorConfig& cfg, const GateOverride& over = {});

/// Independently drops the shell with probability p_shell and the e=6 half
/// with probability p_half6. Always consumes two draws from `rng`.
DropoutMask subset_dropout(double p_shell, double p_half6, std::mt19937_64& rng);

}  // namespace spnas
