#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spnas/superkernel.hpp"
#include "spnas/supernet.hpp"
#include "spnas/tensor.hpp"

namespace spnas {

/// Measured runtimes (ms) of the four MBConv variants at one layer.
struct LayerLatency {
  double r33_3 = 0.0;
  double r33_6 = 0.0;
  double r55_3 = 0.0;
  double r55_6 = 0.0;

  double lookup(const LayerDecision& d) const;
  friend bool operator==(const LayerLatency&, const LayerLatency&) = default;
};

struct LatencyTable {
  std::vector<LayerLatency> layers;
  double fixed_overhead_ms = 0.0;  // stem, head and anything not searched

  /// Throws on non-positive or non-finite entries. Returns one warning per
  /// violated monotonicity relation (5x5 >= 3x3, e6 >= e3).
  std::vector<std::string> validate() const;
  /// Throws unless there is exactly one entry per searchable layer.
  void check_coverage(std::size_t num_layers) const;
  friend bool operator==(const LatencyTable&, const LatencyTable&) = default;
};

struct RuntimeEstimate {
  double total_ms = 0.0;
  std::vector<double> per_layer_ms;
  bool differentiable = false;
};

/// Closed form of the layer runtime for gate values (g_e3, g_e6, g_k5):
///   R_e = g_e3 * ((1 - g_e6) * R55_3 + g_e6 * R55_6)
///   R   = g_k5 * R_e + (1 - g_k5) * R33_6 * (R_e / R55_6)
/// Hard corners come out exact: (1,1,1) -> R55_6, (1,1,0) -> R33_6,
/// (1,0,1) -> R55_3, (0,*,*) -> 0, while (1,0,0) gives R55_3 * R33_6 / R55_6.
double layer_runtime_value(const LayerLatency& lut, double g_e3, double g_e6, double g_k5);

/// Differentiable layer runtime over scalar gate tensors.
Tensor layer_runtime(Tape& tape, const LayerLatency& lut, const Tensor& g_e3, const Tensor& g_e6,
                     const Tensor& g_k5);

/// Evaluates the superkernel's gates and returns the layer runtime.
Tensor layer_runtime_relaxed(Tape& tape, const SuperKernel& sk, const LayerLatency& lut,
                             const IndicatorConfig& cfg, const GateOverride& over = {});

/// fixed_overhead + sum of layer runtimes, from gates of a forward pass.
Tensor network_runtime_from_gates(Tape& tape, const std::vector<LayerGates>& gates,
                                  const LatencyTable& lut);

Tensor network_runtime_relaxed(Tape& tape, const Supernet& net, const LatencyTable& lut,
                               const IndicatorConfig& cfg,
                               const std::vector<GateOverride>& overrides = {});

/// Same quantities as plain numbers with the per-layer breakdown.
RuntimeEstimate relaxed_estimate(const std::vector<LayerGates>& gates, const LatencyTable& lut);

/// Exact table lookup per decision (skip costs 0) plus the fixed overhead.
RuntimeEstimate predict_discrete_runtime(const DerivedArchitecture& arch, const LatencyTable& lut);

/// Multiply-accumulate counts of one MBConv variant at a layer.
struct MacCount {
  std::uint64_t expand = 0;
  std::uint64_t depthwise = 0;
  std::uint64_t project = 0;
  std::uint64_t total() const { return expand + depthwise + project; }
};
MacCount mbconv_macs(const LayerGeometry& g, const LayerDecision& d);
std::uint64_t stem_head_macs(const NetworkPlan& plan);

struct CostModel {
  double ms_per_mac = 1e-6;
  double noise = 0.0;  // relative std-dev of a log-normal factor per entry
  std::uint64_t seed = 0;
  friend bool operator==(const CostModel&, const CostModel&) = default;
};

/// Runtimes proportional to MAC counts, optionally perturbed by seeded noise.
LatencyTable synth_lut(const MacroConfig& cfg, const CostModel& model);

struct LutReport {
  std::size_t samples = 0;
  double rmse_ms = 0.0;
  double mean_abs_pct_error = 0.0;
};

/// Compares predicted against measured runtimes (ms).
LutReport validate_lut(const LatencyTable& lut,
                       const std::vector<std::pair<DerivedArchitecture, double>>& samples);

/// Multiplies every value by (1 + rel) or (1 - rel) with a fair random sign.
std::vector<double> perturb_runtimes(const std::vector<double>& values, double rel,
                                     std::mt19937_64& rng);

}  // namespace spnas
