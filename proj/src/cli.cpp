#include "spnas/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spnas/io.hpp"
#include "spnas/oracle.hpp"
#include "spnas/search.hpp"

namespace spnas {
namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Paper reference figures for the LUT predictor on a physical phone; quoted only.
constexpr double kReferenceRmseMs = 1.32;
constexpr double kReferenceErrorPct = 1.76;

struct Common {
  std::string config;
  std::string data;
  std::string lut;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig load_config(const Common& c) {
  return c.config.empty() ? RunConfig{} : read_config(read_text_file(c.config));
}

LatencyTable load_or_synth_lut(const Common& c, const RunConfig& cfg) {
  LatencyTable lut = c.lut.empty() ? synth_lut(cfg.macro, cfg.lut) : read_lut(read_text_file(c.lut));
  for (const auto& w : lut.validate()) std::cerr << "warning: LUT " << w << "\n";
  return lut;
}

std::pair<Dataset, Dataset> data_for(const Common& c, const RunConfig& cfg) {
  const DataSpec spec = c.data.empty() ? cfg.data : parse_data_arg(c.data, cfg.data);
  return load_data(spec, cfg.macro);
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

ojson metrics_json(const EvalMetrics& m) { return ojson{{"top1", m.top1}, {"eval_ce", m.loss}}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_common(CLI::App* cmd, Common& c, bool config, bool data, bool lut) {
  if (config) cmd->add_option("--config", c.config, "key=value run configuration")->check(CLI::ExistingFile);
  if (data) cmd->add_option("--data", c.data, "synth:key=val,... or cifar:train=a;b,eval=c");
  if (lut) cmd->add_option("--lut", c.lut, "latency table CSV")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
}

int cmd_search(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.search.seed = *c.seed;
  const LatencyTable lut = load_or_synth_lut(c, cfg);
  const auto [train, eval] = data_for(c, cfg);
  std::mt19937_64 rng(cfg.search.seed);
  Supernet net(cfg.macro, rng);
  const SearchResult res = run_search(net, train, lut, cfg.search);
  const Provenance prov{cfg.search.seed, cfg.search.lambda, res.trace.steps.size()};

  fs::create_directories(c.out);
  const fs::path dir(c.out);
  write_file_atomic((dir / "architecture.json").string(), write_architecture({res.architecture, prov}));
  write_file_atomic((dir / "trace.csv").string(), write_trace_csv(res.trace));
  write_file_atomic((dir / "snapshots.jsonl").string(), write_snapshots_jsonl(res.trace));
  write_file_atomic((dir / "checkpoint.spnas").string(), checkpoint_bytes(supernet_checkpoint(net, prov)));

  const auto& last = res.trace.steps.back();
  std::printf("searched %zu steps (%zu per epoch) in %.1f s\n", res.trace.steps.size(),
              res.trace.steps_per_epoch, seconds_since(t0));
  std::printf("final ce %.4f, runtime %.4f ms, loss %.4f\n", last.ce, last.runtime_ms, last.total);
  std::printf("architecture: %s (predicted %.4f ms)\n", res.architecture.to_string().c_str(),
              predict_discrete_runtime(res.architecture, lut).total_ms);
  return 0;
}

int cmd_derive(const std::string& checkpoint, const Common& c) {
  auto [net, prov] = restore_supernet(parse_checkpoint(read_binary_file(checkpoint)));
  const DerivedArchitecture arch = net.derive();
  write_file_atomic(c.out, write_architecture({arch, prov}));
  std::printf("architecture: %s\n", arch.to_string().c_str());
  return 0;
}

int cmd_train(const std::string& arch_path, const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const ArchitectureFile af = read_architecture(read_text_file(arch_path));
  cfg.macro = af.architecture.macro;
  const auto [train, eval] = data_for(c, cfg);
  std::mt19937_64 rng(cfg.train.seed);
  DiscreteNet net = build_discrete(af.architecture, nullptr, rng);
  const TrainMetrics m = train_discrete(net, train, eval, cfg.train);
  ojson doc{{"architecture", af.architecture.to_string()},
            {"seed", cfg.train.seed},
            {"epochs", cfg.train.epochs},
            {"steps", m.steps},
            {"parameters", net.num_parameters()},
            {"final_train_loss", m.final_train_loss},
            {"eval", metrics_json(m.eval)}};
  write_file_atomic(c.out, dump(doc));
  std::printf("trained %s for %zu steps in %.1f s: top1 %.4f, eval ce %.4f\n",
              af.architecture.to_string().c_str(), m.steps, seconds_since(t0), m.eval.top1,
              m.eval.loss);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& arch_path, const Common& c) {
  RunConfig cfg = load_config(c);
  auto [net, prov] = restore_supernet(parse_checkpoint(read_binary_file(checkpoint)));
  cfg.macro = net.macro();
  const DerivedArchitecture arch =
      arch_path.empty() ? net.derive() : read_architecture(read_text_file(arch_path)).architecture;
  const auto [train, eval] = data_for(c, cfg);
  std::mt19937_64 rng(c.seed.value_or(0));
  const DiscreteNet discrete = build_discrete(arch, &net, rng);
  const EvalMetrics m = evaluate(discrete, eval);
  ojson doc{{"architecture", arch.to_string()}, {"eval", metrics_json(m)}};
  write_file_atomic(c.out, dump(doc));
  std::printf("%s: top1 %.4f, eval ce %.4f\n", arch.to_string().c_str(), m.top1, m.loss);
  return 0;
}

int cmd_predict(const std::string& arch_path, const Common& c) {
  const ArchitectureFile af = read_architecture(read_text_file(arch_path));
  const LatencyTable lut = read_lut(read_text_file(c.lut));
  const RuntimeEstimate est = predict_discrete_runtime(af.architecture, lut);
  if (!c.out.empty()) {
    ojson doc{{"architecture", af.architecture.to_string()},
              {"total_ms", est.total_ms},
              {"fixed_overhead_ms", lut.fixed_overhead_ms},
              {"per_layer_ms", est.per_layer_ms}};
    write_file_atomic(c.out, dump(doc));
  }
  std::printf("%s\n", format_double(est.total_ms).c_str());
  return 0;
}

int cmd_lut_synth(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.lut.seed = *c.seed;
  const LatencyTable lut = synth_lut(cfg.macro, cfg.lut);
  write_file_atomic(c.out, write_lut(lut));
  std::printf("wrote %zu layer entries, overhead %s ms\n", lut.layers.size(),
              format_double(lut.fixed_overhead_ms).c_str());
  return 0;
}

int cmd_lut_sample(const Common& c, std::size_t n, double noise) {
  RunConfig cfg = load_config(c);
  const LatencyTable lut = load_or_synth_lut(c, cfg);
  std::mt19937_64 rng(c.seed.value_or(0));
  const SearchSpace space(cfg.macro);
  std::vector<std::pair<DerivedArchitecture, double>> samples;
  std::vector<double> truth;
  std::vector<DerivedArchitecture> archs;
  for (std::size_t i = 0; i < n; ++i) {
    archs.push_back(space.sample(rng));
    truth.push_back(predict_discrete_runtime(archs.back(), lut).total_ms);
  }
  const std::vector<double> measured = perturb_runtimes(truth, noise, rng);
  for (std::size_t i = 0; i < n; ++i) samples.emplace_back(archs[i], measured[i]);
  write_file_atomic(c.out, write_samples(samples));
  std::printf("wrote %zu samples with +/-%g relative noise\n", n, noise);
  return 0;
}

int cmd_lut_validate(const std::string& samples_path, const Common& c) {
  const RunConfig cfg = load_config(c);
  const LatencyTable lut = read_lut(read_text_file(c.lut));
  for (const auto& w : lut.validate()) std::cerr << "warning: LUT " << w << "\n";
  const auto samples = read_samples(read_text_file(samples_path), cfg.macro);
  const LutReport r = validate_lut(lut, samples);
  if (!c.out.empty()) {
    ojson doc{{"samples", r.samples},
              {"rmse_ms", r.rmse_ms},
              {"mean_abs_pct_error", r.mean_abs_pct_error},
              {"reference", ojson{{"rmse_ms", kReferenceRmseMs},
                                  {"mean_abs_pct_error", kReferenceErrorPct},
                                  {"note", "published phone measurements, not reproduced here"}}}};
    write_file_atomic(c.out, dump(doc));
  }
  std::printf("reference (published phone measurements): RMSE %.2f ms, mean error %.2f%%\n",
              kReferenceRmseMs, kReferenceErrorPct);
  std::printf("samples %zu: RMSE %.2f ms, mean abs error %.2f%%\n", r.samples, r.rmse_ms,
              r.mean_abs_pct_error);
  return 0;
}

int cmd_oracle(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.search.seed = *c.seed;
  const LatencyTable lut = load_or_synth_lut(c, cfg);
  const auto [train, eval] = data_for(c, cfg);
  const SpaceEvaluation space = exhaustive_evaluate(cfg.macro, train, eval, lut, cfg.train,
                                                    cfg.search.lambda, cfg.oracle.cap,
                                                    cfg.search.runtime_floor_ms);
  std::mt19937_64 rng(cfg.search.seed);
  Supernet net(cfg.macro, rng);
  const SearchResult res = run_search(net, train, lut, cfg.search);
  const double pct = search_vs_oracle(space, res.architecture, cfg.search.lambda);
  const ArchRecord& searched = space.find(res.architecture);
  const ArchRecord* best = &space.records.front();
  for (const auto& r : space.records)
    if (r.objective < best->objective) best = &r;

  ojson front = ojson::array();
  for (std::size_t i : space.pareto) front.push_back(space.records[i].architecture.to_string());
  ojson doc{{"lambda", cfg.search.lambda},
            {"space_size", space.records.size()},
            {"searched", ojson{{"architecture", searched.architecture.to_string()},
                               {"objective", searched.objective},
                               {"top1", searched.top1},
                               {"runtime_ms", searched.runtime_ms}}},
            {"best", ojson{{"architecture", best->architecture.to_string()},
                           {"objective", best->objective}}},
            {"fraction_strictly_better", pct},
            {"pareto_front", front}};
  fs::create_directories(c.out);
  const fs::path dir(c.out);
  write_file_atomic((dir / "space.csv").string(), write_space_csv(space));
  write_file_atomic((dir / "oracle.json").string(), dump(doc));
  std::printf("evaluated %zu architectures in %.1f s\n", space.records.size(), seconds_since(t0));
  std::printf("searched %s: objective %.4f, fraction strictly better %.3f (best %s %.4f)\n",
              searched.architecture.to_string().c_str(), searched.objective, pct,
              best->architecture.to_string().c_str(), best->objective);
  return 0;
}

int cmd_ablation(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const auto [train, eval] = data_for(c, cfg);
  const SearchSpace space(cfg.macro);
  auto uniform = [&](int k, int e) {
    DerivedArchitecture a{cfg.macro, {}};
    for (std::size_t i = 0; i < space.num_layers(); ++i) a.decisions.push_back(LayerDecision::mbconv(k, e));
    return a;
  };
  std::mt19937_64 rng55(cfg.train.seed);
  DiscreteNet shared = build_discrete(uniform(5, 6), nullptr, rng55);
  const AblationResult ab = ablation_subset_training(shared, train, eval, cfg.train);
  std::mt19937_64 rng33(cfg.train.seed);
  DiscreteNet net33 = build_discrete(uniform(3, 6), nullptr, rng33);
  const TrainMetrics m33 = train_discrete(net33, train, eval, cfg.train);
  std::mt19937_64 rng55b(cfg.train.seed);
  DiscreteNet net55 = build_discrete(uniform(5, 6), nullptr, rng55b);
  const TrainMetrics m55 = train_discrete(net55, train, eval, cfg.train);

  ojson doc{{"seed", cfg.train.seed},
            {"subset_trained", ojson{{"inner_3x3", metrics_json(ab.inner)},
                                     {"full_5x5", metrics_json(ab.full)}}},
            {"individually_trained", ojson{{"3x3", metrics_json(m33.eval)},
                                           {"5x5", metrics_json(m55.eval)}}},
            {"reference_top1", ojson{{"subset_inner_3x3", 73.43},
                                     {"subset_full_5x5", 73.86},
                                     {"individual_3x3", 73.59},
                                     {"individual_5x5", 74.10}}}};
  write_file_atomic(c.out, dump(doc));
  std::printf("subset-trained: inner 3x3 top1 %.4f, full 5x5 top1 %.4f\n", ab.inner.top1, ab.full.top1);
  std::printf("individually trained: 3x3 top1 %.4f, 5x5 top1 %.4f\n", m33.eval.top1, m55.eval.top1);
  std::printf("reference top-1 (published, not reproduced): 73.43 / 73.86 vs 73.59 / 74.10\n");
  return 0;
}

int cmd_random_baseline(const Common& c, const std::string& window, std::size_t n) {
  const RunConfig cfg = load_config(c);
  const LatencyTable lut = load_or_synth_lut(c, cfg);
  const auto colon = window.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("--window must be lo:hi");
  const double lo = std::stod(window.substr(0, colon));
  const std::string hi_s = window.substr(colon + 1);
  const double hi = hi_s == "inf" ? std::numeric_limits<double>::infinity() : std::stod(hi_s);
  std::mt19937_64 rng(c.seed.value_or(0));
  const RandomBaseline rb = random_search_baseline(cfg.macro, lut, lo, hi, n, rng);
  ojson archs = ojson::array();
  for (std::size_t i = 0; i < rb.architectures.size(); ++i) {
    archs.push_back(ojson{{"architecture", rb.architectures[i].to_string()},
                          {"runtime_ms", rb.runtimes_ms[i]}});
  }
  ojson doc{{"window_ms", ojson::array({lo, std::isinf(hi) ? ojson("inf") : ojson(hi)})},
            {"draws", rb.draws},
            {"acceptance_rate", rb.acceptance_rate},
            {"samples", archs}};
  write_file_atomic(c.out, dump(doc));
  std::printf("accepted %zu of %zu draws (rate %.4g)\n", n, rb.draws, rb.acceptance_rate);
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Single-path superkernel architecture search"};
  app.require_subcommand(1);

  Common search_c, derive_c, train_c, eval_c, predict_c, synth_c, sample_c, validate_c, oracle_c,
      ablation_c, random_c;
  std::string checkpoint, arch_path, samples_path, window;
  std::size_t n_samples = 100, n_random = 10;
  double sample_noise = 0.01;

  auto* search = app.add_subcommand("search", "run the architecture search");
  add_common(search, search_c, true, true, true);
  search->add_option("--out", search_c.out, "output directory")->required();

  auto* derive = app.add_subcommand("derive", "re-derive decisions from a checkpoint");
  derive->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  derive->add_option("--out", derive_c.out, "architecture JSON")->required();
  derive->add_option("--seed", derive_c.seed, "accepted for uniformity; unused");

  auto* train = app.add_subcommand("train", "train a discrete architecture from scratch");
  add_common(train, train_c, true, true, false);
  train->add_option("--arch", arch_path)->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_c.out, "result JSON")->default_val("train_result.json");

  auto* eval = app.add_subcommand("eval", "evaluate the derived network with supernet weights");
  add_common(eval, eval_c, true, true, false);
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--arch", arch_path, "defaults to the checkpoint's derived architecture")
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_c.out, "result JSON")->default_val("eval_result.json");

  auto* predict = app.add_subcommand("predict-runtime", "predicted runtime of an architecture");
  predict->add_option("--arch", arch_path)->required()->check(CLI::ExistingFile);
  predict->add_option("--lut", predict_c.lut)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", predict_c.out, "optional result JSON");
  predict->add_option("--seed", predict_c.seed, "accepted for uniformity; unused");

  auto* lut = app.add_subcommand("lut", "latency table utilities");
  lut->require_subcommand(1);
  auto* synth = lut->add_subcommand("synth", "synthesize a MAC-proportional table");
  add_common(synth, synth_c, true, false, false);
  synth->add_option("--out", synth_c.out)->required();
  auto* sample = lut->add_subcommand("sample", "random architectures with perturbed runtimes");
  add_common(sample, sample_c, true, false, true);
  sample->add_option("-n", n_samples)->check(CLI::PositiveNumber);
  sample->add_option("--noise", sample_noise, "relative +/- perturbation")->check(CLI::NonNegativeNumber);
  sample->add_option("--out", sample_c.out)->required();
  auto* validate = lut->add_subcommand("validate", "compare predictions with measurements");
  add_common(validate, validate_c, true, false, false);
  validate->add_option("--lut", validate_c.lut)->required()->check(CLI::ExistingFile);
  validate->add_option("--samples", samples_path)->required()->check(CLI::ExistingFile);
  validate->add_option("--out", validate_c.out, "optional report JSON");

  auto* oracle = app.add_subcommand("oracle", "exhaustive evaluation against a search");
  add_common(oracle, oracle_c, true, true, true);
  oracle->add_option("--out", oracle_c.out, "output directory")->required();

  auto* ablation = app.add_subcommand("ablation", "subset-training ablation");
  add_common(ablation, ablation_c, true, true, false);
  ablation->add_option("--out", ablation_c.out, "result JSON")->default_val("ablation.json");

  auto* random = app.add_subcommand("random-baseline", "rejection-sampled random architectures");
  add_common(random, random_c, true, false, true);
  random->add_option("--window", window, "lo:hi in ms (hi may be inf)")->required();
  random->add_option("-n", n_random)->check(CLI::PositiveNumber);
  random->add_option("--out", random_c.out, "result JSON")->default_val("random_baseline.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (search->parsed()) return cmd_search(search_c);
    if (derive->parsed()) return cmd_derive(checkpoint, derive_c);
    if (train->parsed()) return cmd_train(arch_path, train_c);
    if (eval->parsed()) return cmd_eval(checkpoint, arch_path, eval_c);
    if (predict->parsed()) return cmd_predict(arch_path, predict_c);
    if (synth->parsed()) return cmd_lut_synth(synth_c);
    if (sample->parsed()) return cmd_lut_sample(sample_c, n_samples, sample_noise);
    if (validate->parsed()) return cmd_lut_validate(samples_path, validate_c);
    if (oracle->parsed()) return cmd_oracle(oracle_c);
    if (ablation->parsed()) return cmd_ablation(ablation_c);
    if (random->parsed()) return cmd_random_baseline(random_c, window, n_random);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace spnas
