#include "spnas/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "spnas/io.hpp"

namespace spnas {
namespace {

std::uint64_t total_macs(const DerivedArchitecture& arch) {
  const NetworkPlan plan = plan_network(arch.macro);
  std::uint64_t macs = stem_head_macs(plan);
  for (std::size_t i = 0; i < arch.decisions.size(); ++i) {
    macs += mbconv_macs(plan.layers[i], arch.decisions[i]).total();
  }
  return macs;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

const ArchRecord& SpaceEvaluation::find(const DerivedArchitecture& arch) const {
  for (const auto& r : records)
    if (r.architecture.decisions == arch.decisions) return r;
  throw std::invalid_argument("architecture " + arch.to_string() + " is not in the evaluated space");
}

double nas_objective(double eval_ce, double runtime_ms, double lambda, double floor_ms) {
  return eval_ce + lambda * std::log(std::max(runtime_ms, floor_ms));
}

std::vector<std::size_t> pareto_front(const std::vector<ArchRecord>& records) {
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < records.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < records.size() && !dominated; ++j) {
      if (i == j) continue;
      const auto& a = records[j];
      const auto& b = records[i];
      dominated = a.top1 >= b.top1 && a.runtime_ms <= b.runtime_ms &&
                  (a.top1 > b.top1 || a.runtime_ms < b.runtime_ms);
    }
    if (!dominated) front.push_back(i);
  }
  std::stable_sort(front.begin(), front.end(), [&records](std::size_t a, std::size_t b) {
    return records[a].runtime_ms < records[b].runtime_ms;
  });
  return front;
}

SpaceEvaluation exhaustive_evaluate(const MacroConfig& cfg, const Dataset& train,
                                    const Dataset& eval, const LatencyTable& lut,
                                    const TrainSchedule& schedule, double lambda,
                                    std::uint64_t cap, double floor_ms,
                                    const std::vector<std::uint64_t>& order) {
  const std::vector<DerivedArchitecture> space = enumerate_space(cfg, cap);
  lut.check_coverage(cfg.num_searchable_layers());
  std::vector<std::uint64_t> visit(space.size());
  std::iota(visit.begin(), visit.end(), 0);
  if (!order.empty()) {
    std::vector<std::uint64_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != visit) throw std::invalid_argument("evaluation order must permute the space");
    visit = order;
  }
  SpaceEvaluation out;
  out.macro = cfg;
  out.lambda = lambda;
  out.runtime_floor_ms = floor_ms;
  out.records.resize(space.size());
  for (std::uint64_t i : visit) {
    const DerivedArchitecture& arch = space[i];
    // Same seed for every architecture: results do not depend on visiting order.
    std::mt19937_64 rng(schedule.seed);
    DiscreteNet net = build_discrete(arch, nullptr, rng);
    const TrainMetrics m = train_discrete(net, train, eval, schedule);
    ArchRecord& r = out.records[i];
    r.index = i;
    r.architecture = arch;
    r.top1 = m.eval.top1;
    r.eval_ce = m.eval.loss;
    r.runtime_ms = predict_discrete_runtime(arch, lut).total_ms;
    r.macs = total_macs(arch);
    r.objective = nas_objective(r.eval_ce, r.runtime_ms, lambda, floor_ms);
  }
  out.pareto = pareto_front(out.records);
  return out;
}

double search_vs_oracle(const SpaceEvaluation& space, const DerivedArchitecture& searched,
                        double lambda) {
  if (!(searched.macro == space.macro)) {
    throw std::invalid_argument("search_vs_oracle: searched architecture uses a different macro");
  }
  if (lambda != space.lambda) {
    throw std::invalid_argument("search_vs_oracle: lambda " + format_double(lambda) +
                                " differs from the oracle's " + format_double(space.lambda));
  }
  const double target = space.find(searched).objective;
  std::size_t better = 0;
  for (const auto& r : space.records)
    if (r.objective < target) ++better;
  return static_cast<double>(better) / static_cast<double>(space.records.size());
}

std::string write_space_csv(const SpaceEvaluation& space) {
  std::vector<bool> on_front(space.records.size(), false);
  for (std::size_t i : space.pareto) on_front[i] = true;
  std::string out = "index,decisions,top1,eval_ce,runtime_ms,macs,objective,pareto\n";
  for (std::size_t i = 0; i < space.records.size(); ++i) {
    const auto& r = space.records[i];
    std::string dec;
    for (std::size_t l = 0; l < r.architecture.decisions.size(); ++l) {
      if (l) dec += '|';
      dec += r.architecture.decisions[l].to_string();
    }
    out += std::to_string(r.index) + "," + dec + "," + format_double(r.top1) + "," +
           format_double(r.eval_ce) + "," + format_double(r.runtime_ms) + "," +
           std::to_string(r.macs) + "," + format_double(r.objective) + "," +
           (on_front[i] ? "1" : "0") + "\n";
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equally sized samples of length >= 2");
  }
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace spnas
