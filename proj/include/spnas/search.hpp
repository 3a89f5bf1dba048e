#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spnas/data.hpp"
#include "spnas/latency.hpp"
#include "spnas/superkernel.hpp"
#include "spnas/supernet.hpp"

namespace spnas {

enum class LrDecay { constant, cosine, step };

std::string to_string(LrDecay d);
LrDecay lr_decay_from_string(const std::string& s);

struct LrSchedule {
  double initial = 0.05;
  LrDecay decay = LrDecay::cosine;
  double step_gamma = 0.1;  // step decay: multiply by gamma every step_epochs
  int step_epochs = 1;

  double at(std::size_t step, std::size_t total_steps, std::size_t steps_per_epoch) const;
  void validate() const;
  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

/// Subset dropout probability, interpolated linearly from p_start to p_end over
/// the first active_epoch_fraction of the epochs and zero afterwards.
struct DropoutSchedule {
  double p_start = 0.5;
  double p_end = 0.0;
  double active_epoch_fraction = 0.75;

  double probability(std::size_t step, std::size_t epochs, std::size_t steps_per_epoch) const;
  void validate() const;
  friend bool operator==(const DropoutSchedule&, const DropoutSchedule&) = default;
};

struct SearchConfig {
  double lambda = 0.1;
  int epochs = 8;
  std::size_t batch_size = 128;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 4e-5;  // applied to convolution and dense weights only
  DropoutSchedule dropout;
  std::uint64_t seed = 0;
  IndicatorConfig indicator;
  double runtime_floor_ms = 1e-3;
  double grad_clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const;
  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

struct LossBreakdown {
  std::size_t step = 0;
  double ce = 0.0;
  double runtime_ms = 0.0;
  double total = 0.0;
};

struct EpochSnapshot {
  int epoch = 0;          // snapshot taken before this epoch; epochs == end of search
  std::size_t step = 0;   // optimizer steps completed so far
  std::vector<DecisionSnapshot> layers;
};

struct SearchTrace {
  std::vector<LossBreakdown> steps;
  std::vector<EpochSnapshot> snapshots;
  std::size_t steps_per_epoch = 0;
};

struct SearchResult {
  DerivedArchitecture architecture;
  SearchTrace trace;
};

/// Raised when the loss stops being finite. Carries the steps recorded so far.
class SearchDiverged : public std::runtime_error {
 public:
  SearchDiverged(std::size_t step, SearchTrace trace);
  std::size_t step() const { return step_; }
  const SearchTrace& trace() const { return trace_; }

 private:
  std::size_t step_;
  SearchTrace trace_;
};

/// ce + lambda * ln(max(runtime, floor)); no gradient reaches runtime below the floor.
Tensor nas_loss(Tape& tape, const Tensor& ce, const Tensor& runtime, double lambda,
                double floor_ms);

/// SGD with momentum over one parameter set. Weight decay is added to the
/// gradient of ParamKind::weight entries only. With clip_norm > 0 the raw
/// gradients are rescaled so their global L2 norm does not exceed it.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay, double clip_norm = 0.0);
  /// Applies one update to every parameter and clears the gradients.
  void step(const std::vector<NamedParam>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  double clip_norm_;
  std::vector<std::vector<double>> velocity_;
};

/// Called after every optimizer step.
using SearchObserver = std::function<void(const LossBreakdown&)>;

/// Joint training of weights and thresholds on one loss. Thresholds and
/// weights are updated by the same optimizer in the same step.
SearchResult run_search(Supernet& net, const Dataset& data, const LatencyTable& lut,
                        const SearchConfig& cfg, const SearchObserver& observer = {});

struct TrainSchedule {
  int epochs = 10;
  std::size_t batch_size = 64;
  LrSchedule lr{0.02};  // no batch norm: 0.05 diverges on some seeds
  double momentum = 0.9;
  double weight_decay = 4e-5;
  std::uint64_t seed = 0;
  Augment augment;

  void validate() const;
  friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

struct EvalMetrics {
  double top1 = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

struct TrainMetrics {
  EvalMetrics eval;
  double final_train_loss = 0.0;
  std::size_t steps = 0;
};

/// Computes the loss of one batch, runs backward, returns the loss value.
using BatchStep = std::function<double(Tape& tape, const Tensor& x, std::span<const int> labels)>;

/// Generic minibatch loop shared by discrete training and the ablation.
/// Returns the mean loss of the last epoch (0 when epochs == 0).
double train_loop(const std::vector<NamedParam>& params, const Dataset& data,
                  const TrainSchedule& schedule, const BatchStep& step,
                  std::size_t* steps_done = nullptr);

EvalMetrics evaluate(const DiscreteNet& net, const Dataset& data, std::size_t batch_size = 256,
                     const DiscreteForwardOptions& opts = {});

TrainMetrics train_discrete(DiscreteNet& net, const Dataset& train, const Dataset& eval,
                            const TrainSchedule& schedule);

struct AblationResult {
  EvalMetrics inner;  // inference with the center 3x3 only
  EvalMetrics full;   // inference with the full 5x5 kernels
};

/// Each step accumulates gradients of a shell-masked pass and a full pass,
/// then applies a single update. Requires every non-skip layer to use k=5.
AblationResult ablation_subset_training(DiscreteNet& net, const Dataset& train,
                                        const Dataset& eval, const TrainSchedule& schedule);

struct RandomBaseline {
  std::vector<DerivedArchitecture> architectures;
  std::vector<double> runtimes_ms;
  std::size_t draws = 0;
  double acceptance_rate = 0.0;
};

/// Raised when a runtime window accepts fewer than 1 in 10^4 draws.
class InfeasibleWindow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling: uniform per-layer draws kept when lo <= runtime <= hi.
RandomBaseline random_search_baseline(const MacroConfig& cfg, const LatencyTable& lut,
                                      double lo_ms, double hi_ms, std::size_t n,
                                      std::mt19937_64& rng);

}  // namespace spnas
