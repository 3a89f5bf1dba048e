#include "spnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spnas/ops.hpp"

namespace spnas {
namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kSearchStream = 0x5ea4c401;
constexpr std::uint32_t kTrainStream = 0x7a1a0001;

std::span<const std::size_t> batch_slice(const std::vector<std::size_t>& order, std::size_t step,
                                         std::size_t batch) {
  const std::size_t begin = step * batch;
  const std::size_t end = std::min(order.size(), begin + batch);
  return std::span<const std::size_t>(order).subspan(begin, end - begin);
}

}  // namespace

std::string to_string(LrDecay d) {
  switch (d) {
    case LrDecay::constant: return "constant";
    case LrDecay::cosine: return "cosine";
    case LrDecay::step: return "step";
  }
  return "constant";
}

LrDecay lr_decay_from_string(const std::string& s) {
  if (s == "constant") return LrDecay::constant;
  if (s == "cosine") return LrDecay::cosine;
  if (s == "step") return LrDecay::step;
  throw std::invalid_argument("unknown learning-rate decay '" + s + "'");
}

void LrSchedule::validate() const {
  if (!(initial > 0.0) || !std::isfinite(initial)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (decay == LrDecay::step && (step_epochs < 1 || !(step_gamma > 0.0))) {
    throw std::invalid_argument("step decay needs step_epochs >= 1 and step_gamma > 0");
  }
}

double LrSchedule::at(std::size_t step, std::size_t total_steps,
                      std::size_t steps_per_epoch) const {
  switch (decay) {
    case LrDecay::constant: return initial;
    case LrDecay::cosine: {
      if (total_steps == 0) return initial;
      const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
      return 0.5 * initial * (1.0 + std::cos(std::numbers::pi * progress));
    }
    case LrDecay::step: {
      const std::size_t epoch = steps_per_epoch ? step / steps_per_epoch : 0;
      return initial * std::pow(step_gamma, static_cast<double>(epoch / step_epochs));
    }
  }
  return initial;
}

void DropoutSchedule::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_start) || !prob(p_end)) throw std::invalid_argument("dropout p must lie in [0,1]");
  if (!(active_epoch_fraction >= 0.0 && active_epoch_fraction <= 1.0)) {
    throw std::invalid_argument("dropout active_epoch_fraction must lie in [0,1]");
  }
}

double DropoutSchedule::probability(std::size_t step, std::size_t epochs,
                                    std::size_t steps_per_epoch) const {
  const auto active_epochs =
      static_cast<std::size_t>(std::lround(active_epoch_fraction * static_cast<double>(epochs)));
  const std::size_t active_steps = active_epochs * steps_per_epoch;
  if (step >= active_steps) return 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(active_steps);
  return p_start + (p_end - p_start) * t;
}

void SearchConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (epochs < 1) throw std::invalid_argument("search epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(runtime_floor_ms > 0.0)) throw std::invalid_argument("runtime_floor_ms must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(grad_clip_norm >= 0.0)) throw std::invalid_argument("grad_clip_norm must be >= 0");
  lr.validate();
  dropout.validate();
  indicator.validate();
}

void TrainSchedule::validate() const {
  if (epochs < 0) throw std::invalid_argument("training epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  lr.validate();
}

SearchDiverged::SearchDiverged(std::size_t step, SearchTrace trace)
    : std::runtime_error("search diverged at step " + std::to_string(step) +
                         " (non-finite loss)"),
      step_(step),
      trace_(std::move(trace)) {}

Tensor nas_loss(Tape& tape, const Tensor& ce, const Tensor& runtime, double lambda,
                double floor_ms) {
  if (!(floor_ms > 0.0)) throw std::invalid_argument("nas_loss: floor must be positive");
  if (lambda == 0.0) return ce;
  Tensor log_r = ops::log_floor(tape, runtime, floor_ms);
  return ops::add(tape, ce, ops::affine_const(tape, log_r, lambda, 0.0));
}

SgdMomentum::SgdMomentum(double momentum, double weight_decay, double clip_norm)
    : momentum_(momentum), weight_decay_(weight_decay), clip_norm_(clip_norm) {}

void SgdMomentum::step(const std::vector<NamedParam>& params, double lr) {
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.tensor.numel(), 0.0);
  }
  if (velocity_.size() != params.size()) {
    throw std::logic_error("optimizer: parameter set changed between steps");
  }
  double factor = 1.0;
  if (clip_norm_ > 0.0) {
    double sq = 0.0;
    for (const auto& p : params)
      for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) factor = clip_norm_ / norm;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i].tensor;
    auto w = t.mutable_data();
    auto& v = velocity_[i];
    if (v.size() != w.size()) throw std::logic_error("optimizer: parameter " + params[i].name + " resized");
    const bool decay = params[i].kind == ParamKind::weight && weight_decay_ > 0.0;
    if (!t.has_grad()) {
      if (!decay && momentum_ == 0.0) continue;
    }
    auto g = t.mutable_grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double grad = factor * g[j] + (decay ? weight_decay_ * w[j] : 0.0);
      v[j] = momentum_ * v[j] + grad;
      w[j] -= lr * v[j];
    }
    t.zero_grad();
  }
}

SearchResult run_search(Supernet& net, const Dataset& data, const LatencyTable& lut,
                        const SearchConfig& cfg, const SearchObserver& observer) {
  cfg.validate();
  data.validate();
  lut.check_coverage(net.num_layers());
  if (data.num_classes != net.plan().num_classes) {
    throw std::invalid_argument("dataset has " + std::to_string(data.num_classes) +
                                " classes, network expects " +
                                std::to_string(net.plan().num_classes));
  }
  if (data.resolution != static_cast<std::size_t>(net.macro().input_resolution)) {
    throw std::invalid_argument("dataset resolution " + std::to_string(data.resolution) +
                                " differs from the macro input resolution " +
                                std::to_string(net.macro().input_resolution));
  }
  const std::vector<NamedParam> params = net.parameters();
  SgdMomentum opt(cfg.momentum, cfg.weight_decay, cfg.grad_clip_norm);
  std::mt19937_64 rng = seeded(cfg.seed, kSearchStream);

  SearchResult result;
  SearchTrace& trace = result.trace;
  const std::size_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const auto epochs = static_cast<std::size_t>(cfg.epochs);
  const std::size_t total_steps = epochs * spe;
  trace.steps_per_epoch = spe;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    trace.snapshots.push_back({static_cast<int>(epoch), step, net.snapshots()});
    const std::vector<std::size_t> order = epoch_order(data.size(), rng);
    for (std::size_t s = 0; s < spe; ++s, ++step) {
      const auto idx = batch_slice(order, s, cfg.batch_size);
      const Tensor x = make_batch(data, idx);
      const std::vector<int> labels = batch_labels(data, idx);

      SupernetForwardOptions fwd{cfg.indicator, {}};
      const double p = cfg.dropout.probability(step, epochs, spe);
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        fwd.overrides.push_back({std::nullopt, subset_dropout(p, p, rng)});
      }

      Tape tape;
      const SupernetOutput out = net.forward(tape, x, fwd);
      const Tensor ce = ops::softmax_cross_entropy(tape, out.logits, labels);
      const Tensor runtime = network_runtime_from_gates(tape, out.gates, lut);
      const Tensor loss = nas_loss(tape, ce, runtime, cfg.lambda, cfg.runtime_floor_ms);

      const LossBreakdown rec{step, ce[0], runtime[0], loss[0]};
      if (!std::isfinite(rec.total)) throw SearchDiverged(step, trace);
      tape.backward(loss);
      opt.step(params, cfg.lr.at(step, total_steps, spe));
      trace.steps.push_back(rec);
      if (observer) observer(rec);
    }
  }
  trace.snapshots.push_back({cfg.epochs, step, net.snapshots()});
  result.architecture = net.derive();
  return result;
}

double train_loop(const std::vector<NamedParam>& params, const Dataset& data,
                  const TrainSchedule& schedule, const BatchStep& step_fn,
                  std::size_t* steps_done) {
  schedule.validate();
  data.validate();
  SgdMomentum opt(schedule.momentum, schedule.weight_decay);
  std::mt19937_64 rng = seeded(schedule.seed, kTrainStream);
  const std::size_t spe = steps_per_epoch(data.size(), schedule.batch_size);
  const auto epochs = static_cast<std::size_t>(schedule.epochs);
  const std::size_t total_steps = epochs * spe;
  std::size_t step = 0;
  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(data.size(), rng);
    double sum = 0.0;
    for (std::size_t s = 0; s < spe; ++s, ++step) {
      const auto idx = batch_slice(order, s, schedule.batch_size);
      const Tensor x = make_batch(data, idx, schedule.augment, &rng);
      const std::vector<int> labels = batch_labels(data, idx);
      Tape tape;
      const double loss = step_fn(tape, x, labels);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("training diverged at step " + std::to_string(step) +
                                 " (non-finite loss)");
      }
      opt.step(params, schedule.lr.at(step, total_steps, spe));
      sum += loss * static_cast<double>(idx.size());
    }
    last_epoch_loss = sum / static_cast<double>(data.size());
  }
  if (steps_done) *steps_done = step;
  return last_epoch_loss;
}

EvalMetrics evaluate(const DiscreteNet& net, const Dataset& data, std::size_t batch_size,
                     const DiscreteForwardOptions& opts) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < steps_per_epoch(data.size(), batch_size); ++s) {
    const auto idx = batch_slice(order, s, batch_size);
    const std::vector<int> labels = batch_labels(data, idx);
    Tape tape(false);
    const Tensor logits = net.forward(tape, make_batch(data, idx), opts);
    loss_sum += ops::softmax_cross_entropy(tape, logits, labels)[0] * static_cast<double>(idx.size());
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (logits[b * k + c] > logits[b * k + best]) best = c;
      if (static_cast<int>(best) == labels[b]) ++correct;
    }
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

TrainMetrics train_discrete(DiscreteNet& net, const Dataset& train, const Dataset& eval,
                            const TrainSchedule& schedule) {
  TrainMetrics m;
  m.final_train_loss = train_loop(
      net.parameters(), train, schedule,
      [&net](Tape& tape, const Tensor& x, std::span<const int> labels) {
        const Tensor loss = ops::softmax_cross_entropy(tape, net.forward(tape, x), labels);
        tape.backward(loss);
        return loss[0];
      },
      &m.steps);
  m.eval = evaluate(net, eval);
  return m;
}

AblationResult ablation_subset_training(DiscreteNet& net, const Dataset& train,
                                        const Dataset& eval, const TrainSchedule& schedule) {
  for (const auto& layer : net.layers()) {
    if (layer.decision.kernel() != 5) {
      throw std::invalid_argument("ablation needs 5x5 kernels in every layer; layer " +
                                  std::to_string(layer.geometry.index) + " is " +
                                  layer.decision.to_string());
    }
  }
  const DiscreteForwardOptions inner{true};
  train_loop(net.parameters(), train, schedule,
             [&net, &inner](Tape& tape, const Tensor& x, std::span<const int> labels) {
               // Both passes accumulate into the same gradients; halving keeps the
               // step size of a single-pass run.
               const Tensor masked = ops::softmax_cross_entropy(tape, net.forward(tape, x, inner), labels);
               tape.backward(ops::affine_const(tape, masked, 0.5, 0.0));
               Tape full_tape;
               const Tensor full = ops::softmax_cross_entropy(full_tape, net.forward(full_tape, x), labels);
               full_tape.backward(ops::affine_const(full_tape, full, 0.5, 0.0));
               return 0.5 * (masked[0] + full[0]);
             });
  return {evaluate(net, eval, 256, inner), evaluate(net, eval)};
}

RandomBaseline random_search_baseline(const MacroConfig& cfg, const LatencyTable& lut,
                                      double lo_ms, double hi_ms, std::size_t n,
                                      std::mt19937_64& rng) {
  if (n == 0) throw std::invalid_argument("random baseline: n must be positive");
  if (!(lo_ms <= hi_ms)) throw std::invalid_argument("random baseline: window lo must be <= hi");
  const SearchSpace space(cfg);
  lut.check_coverage(space.num_layers());
  // Reaching the cap without n acceptances means the rate is below 1e-4.
  const std::size_t cap = std::max<std::size_t>(10000, n * 10000);
  RandomBaseline out;
  while (out.architectures.size() < n) {
    if (out.draws == cap) {
      throw InfeasibleWindow("runtime window [" + std::to_string(lo_ms) + ", " +
                             std::to_string(hi_ms) + "] ms accepted " +
                             std::to_string(out.architectures.size()) + " of " +
                             std::to_string(out.draws) + " draws (rate below 1e-4)");
    }
    DerivedArchitecture arch = space.sample(rng);
    ++out.draws;
    const double r = predict_discrete_runtime(arch, lut).total_ms;
    if (r >= lo_ms && r <= hi_ms) {
      out.architectures.push_back(std::move(arch));
      out.runtimes_ms.push_back(r);
    }
  }
  out.acceptance_rate = static_cast<double>(n) / static_cast<double>(out.draws);
  return out;
}

}  // namespace spnas
