#include "spnas/latency.hpp"

#include <cmath>
#include <stdexcept>

namespace spnas {
namespace {

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

// overhead + (p_0 + p_1 + ...), accumulated left to right.
double add_overhead(double overhead, const std::vector<double>& per_layer) {
  double s = 0.0;
  for (double v : per_layer) s += v;
  return overhead + s;
}

}  // namespace

double LayerLatency::lookup(const LayerDecision& d) const {
  if (d.is_skip()) return 0.0;
  if (d.kernel() == 3) return d.expansion() == 3 ? r33_3 : r33_6;
  return d.expansion() == 3 ? r55_3 : r55_6;
}

std::vector<std::string> LatencyTable::validate() const {
  if (!(fixed_overhead_ms >= 0.0) || !std::isfinite(fixed_overhead_ms)) {
    throw std::invalid_argument("latency table: fixed overhead must be finite and non-negative");
  }
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (!positive(l.r33_3) || !positive(l.r33_6) || !positive(l.r55_3) || !positive(l.r55_6)) {
      throw std::invalid_argument("latency table: " + where + " has a non-positive entry");
    }
    if (l.r55_3 < l.r33_3) warnings.push_back(where + ": r55_3 < r33_3");
    if (l.r55_6 < l.r33_6) warnings.push_back(where + ": r55_6 < r33_6");
    if (l.r33_6 < l.r33_3) warnings.push_back(where + ": r33_6 < r33_3");
    if (l.r55_6 < l.r55_3) warnings.push_back(where + ": r55_6 < r55_3");
  }
  return warnings;
}

void LatencyTable::check_coverage(std::size_t num_layers) const {
  if (layers.size() < num_layers) {
    throw std::invalid_argument("latency table has no entry for layer " +
                                std::to_string(layers.size()) + " (network has " +
                                std::to_string(num_layers) + " searchable layers)");
  }
  if (layers.size() > num_layers) {
    throw std::invalid_argument("latency table has " + std::to_string(layers.size()) +
                                " entries but the network has " + std::to_string(num_layers) +
                                " searchable layers");
  }
}

double layer_runtime_value(const LayerLatency& lut, double g_e3, double g_e6, double g_k5) {
  const double r_e = g_e3 * ((1.0 - g_e6) * lut.r55_3 + g_e6 * lut.r55_6);
  // R33_6 * R_e / R55_6 expanded over g_e6, so every hard corner is an exact table product.
  const double r_k3 = g_e3 * ((1.0 - g_e6) * (lut.r55_3 * lut.r33_6 / lut.r55_6) + g_e6 * lut.r33_6);
  return g_k5 * r_e + (1.0 - g_k5) * r_k3;
}

Tensor layer_runtime(Tape& tape, const LayerLatency& lut, const Tensor& g_e3, const Tensor& g_e6,
                     const Tensor& g_k5) {
  if (g_e3.numel() != 1 || g_e6.numel() != 1 || g_k5.numel() != 1) {
    throw ShapeError("layer_runtime: gates must be scalars");
  }
  const bool track = tape.needs_grad({&g_e3, &g_e6, &g_k5});
  Tensor out = tape.make_output({1}, track);
  out.mutable_data()[0] = layer_runtime_value(lut, g_e3[0], g_e6[0], g_k5[0]);
  if (track) {
    tape.record(out, [lut, g_e3, g_e6, g_k5, out]() {
      const double g3 = g_e3[0], g6 = g_e6[0], g5 = g_k5[0];
      const double up = out.grad()[0];
      const double ratio = lut.r33_6 / lut.r55_6;
      const double base = (1.0 - g6) * lut.r55_3 + g6 * lut.r55_6;
      const double r_e = g3 * base;
      const double dr_dre = g5 + (1.0 - g5) * ratio;
      if (g_e3.requires_grad()) g_e3.mutable_grad()[0] += up * dr_dre * base;
      if (g_e6.requires_grad()) {
        g_e6.mutable_grad()[0] += up * dr_dre * g3 * (lut.r55_6 - lut.r55_3);
      }
      if (g_k5.requires_grad()) g_k5.mutable_grad()[0] += up * (r_e - ratio * r_e);
    });
  }
  return out;
}

Tensor layer_runtime_relaxed(Tape& tape, const SuperKernel& sk, const LayerLatency& lut,
                             const IndicatorConfig& cfg, const GateOverride& over) {
  const LayerGates g = sk.evaluate(tape, cfg, over).gates;
  return layer_runtime(tape, lut, g.e3, g.e6, g.k5);
}

Tensor network_runtime_from_gates(Tape& tape, const std::vector<LayerGates>& gates,
                                  const LatencyTable& lut) {
  lut.check_coverage(gates.size());
  std::vector<Tensor> parts;
  parts.reserve(gates.size());
  for (std::size_t i = 0; i < gates.size(); ++i) {
    parts.push_back(layer_runtime(tape, lut.layers[i], gates[i].e3, gates[i].e6, gates[i].k5));
  }
  bool track = false;
  for (const auto& p : parts) track = track || tape.needs_grad({&p});
  Tensor out = tape.make_output({1}, track);
  std::vector<double> values;
  for (const auto& p : parts) values.push_back(p[0]);
  out.mutable_data()[0] = add_overhead(lut.fixed_overhead_ms, values);
  if (track) {
    tape.record(out, [parts, out]() {
      const double up = out.grad()[0];
      for (const auto& p : parts)
        if (p.requires_grad()) p.mutable_grad()[0] += up;
    });
  }
  return out;
}

Tensor network_runtime_relaxed(Tape& tape, const Supernet& net, const LatencyTable& lut,
                               const IndicatorConfig& cfg,
                               const std::vector<GateOverride>& overrides) {
  lut.check_coverage(net.num_layers());
  if (!overrides.empty() && overrides.size() != net.num_layers()) {
    throw std::invalid_argument("network_runtime_relaxed: override count mismatch");
  }
  std::vector<LayerGates> gates;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    gates.push_back(
        net.superkernel(i).evaluate(tape, cfg, overrides.empty() ? GateOverride{} : overrides[i])
            .gates);
  }
  return network_runtime_from_gates(tape, gates, lut);
}

RuntimeEstimate relaxed_estimate(const std::vector<LayerGates>& gates, const LatencyTable& lut) {
  lut.check_coverage(gates.size());
  RuntimeEstimate est;
  est.differentiable = true;
  for (std::size_t i = 0; i < gates.size(); ++i) {
    est.per_layer_ms.push_back(
        layer_runtime_value(lut.layers[i], gates[i].e3[0], gates[i].e6[0], gates[i].k5[0]));
  }
  est.total_ms = add_overhead(lut.fixed_overhead_ms, est.per_layer_ms);
  return est;
}

RuntimeEstimate predict_discrete_runtime(const DerivedArchitecture& arch, const LatencyTable& lut) {
  lut.check_coverage(arch.decisions.size());
  RuntimeEstimate est;
  for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
    est.per_layer_ms.push_back(lut.layers[i].lookup(arch.decisions[i]));
  }
  est.total_ms = add_overhead(lut.fixed_overhead_ms, est.per_layer_ms);
  return est;
}

MacCount mbconv_macs(const LayerGeometry& g, const LayerDecision& d) {
  MacCount m;
  if (d.is_skip()) return m;
  const std::uint64_t cin = g.in_channels, cout = g.out_channels;
  const std::uint64_t expanded = cin * static_cast<std::uint64_t>(d.expansion());
  const std::uint64_t k = d.kernel();
  const std::uint64_t in_px = static_cast<std::uint64_t>(g.in_resolution) * g.in_resolution;
  const std::uint64_t out_px = static_cast<std::uint64_t>(g.out_resolution) * g.out_resolution;
  m.expand = in_px * cin * expanded;
  m.depthwise = out_px * expanded * k * k;
  m.project = out_px * expanded * cout;
  return m;
}

std::uint64_t stem_head_macs(const NetworkPlan& plan) {
  const std::uint64_t stem_px = static_cast<std::uint64_t>(plan.stem_resolution) *
                                plan.stem_resolution;
  const std::uint64_t head_px = static_cast<std::uint64_t>(plan.head_resolution) *
                                plan.head_resolution;
  const std::uint64_t stem = stem_px * static_cast<std::uint64_t>(plan.stem_channels) * 27;
  const std::uint64_t head =
      head_px * static_cast<std::uint64_t>(plan.head_in_channels) * plan.head_channels +
      static_cast<std::uint64_t>(plan.head_channels) * plan.num_classes;
  return stem + head;
}

LatencyTable synth_lut(const MacroConfig& cfg, const CostModel& model) {
  if (!positive(model.ms_per_mac)) throw std::invalid_argument("ms_per_mac must be positive");
  if (!(model.noise >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  const NetworkPlan plan = plan_network(cfg);
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Draws happen even at zero noise so entries do not depend on whether noise is set.
  auto cost = [&](std::uint64_t macs) {
    const double z = normal(rng);
    return model.ms_per_mac * static_cast<double>(macs) * std::exp(model.noise * z);
  };
  LatencyTable lut;
  for (const auto& g : plan.layers) {
    LayerLatency l;
    l.r33_3 = cost(mbconv_macs(g, LayerDecision::mbconv(3, 3)).total());
    l.r33_6 = cost(mbconv_macs(g, LayerDecision::mbconv(3, 6)).total());
    l.r55_3 = cost(mbconv_macs(g, LayerDecision::mbconv(5, 3)).total());
    l.r55_6 = cost(mbconv_macs(g, LayerDecision::mbconv(5, 6)).total());
    lut.layers.push_back(l);
  }
  lut.fixed_overhead_ms = cost(stem_head_macs(plan));
  return lut;
}

LutReport validate_lut(const LatencyTable& lut,
                       const std::vector<std::pair<DerivedArchitecture, double>>& samples) {
  if (samples.empty()) throw std::invalid_argument("validate_lut: no samples");
  LutReport r;
  r.samples = samples.size();
  double sq = 0.0, pct = 0.0;
  for (const auto& [arch, measured] : samples) {
    if (!positive(measured)) throw std::invalid_argument("validate_lut: measured runtime must be positive");
    const double predicted = predict_discrete_runtime(arch, lut).total_ms;
    const double diff = predicted - measured;
    sq += diff * diff;
    pct += std::abs(diff) / measured * 100.0;
  }
  r.rmse_ms = std::sqrt(sq / static_cast<double>(samples.size()));
  r.mean_abs_pct_error = pct / static_cast<double>(samples.size());
  return r;
}

std::vector<double> perturb_runtimes(const std::vector<double>& values, double rel,
                                     std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v * (coin(rng) ? 1.0 + rel : 1.0 - rel));
  return out;
}

}  // namespace spnas
