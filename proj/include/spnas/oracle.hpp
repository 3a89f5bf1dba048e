#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spnas/data.hpp"
#include "spnas/latency.hpp"
#include "spnas/search.hpp"
#include "spnas/supernet.hpp"

namespace spnas {

struct ArchRecord {
  std::uint64_t index = 0;  // position in enumeration order
  DerivedArchitecture architecture;
  double top1 = 0.0;
  double eval_ce = 0.0;
  double runtime_ms = 0.0;  // predicted by the LUT
  std::uint64_t macs = 0;
  double objective = 0.0;   // eval_ce + lambda * ln(max(runtime, floor))
};

struct SpaceEvaluation {
  MacroConfig macro;
  double lambda = 0.0;
  double runtime_floor_ms = 1e-3;
  std::vector<ArchRecord> records;       // enumeration order
  std::vector<std::size_t> pareto;       // record positions, ascending runtime

  const ArchRecord& find(const DerivedArchitecture& arch) const;
};

/// The objective used to rank architectures.
double nas_objective(double eval_ce, double runtime_ms, double lambda, double floor_ms);

/// Records not dominated in (higher top1, lower runtime). A record dominates
/// another when it is no worse in both and strictly better in one.
std::vector<std::size_t> pareto_front(const std::vector<ArchRecord>& records);

/// Trains every architecture of the space from the same seed and schedule.
/// `order` optionally permutes evaluation order (records are still returned in
/// enumeration order); it exists to check order independence.
SpaceEvaluation exhaustive_evaluate(const MacroConfig& cfg, const Dataset& train,
                                    const Dataset& eval, const LatencyTable& lut,
                                    const TrainSchedule& schedule, double lambda,
                                    std::uint64_t cap = 256, double floor_ms = 1e-3,
                                    const std::vector<std::uint64_t>& order = {});

/// Fraction of enumerated architectures whose objective is strictly better
/// (lower) than the searched one. Throws when the macro or lambda differ.
double search_vs_oracle(const SpaceEvaluation& space, const DerivedArchitecture& searched,
                        double lambda);

std::string write_space_csv(const SpaceEvaluation& space);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace spnas
