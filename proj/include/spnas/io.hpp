#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spnas/data.hpp"
#include "spnas/latency.hpp"
#include "spnas/search.hpp"
#include "spnas/supernet.hpp"

namespace spnas {

// ---- architecture JSON -----------------------------------------------------

struct Provenance {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::size_t search_steps = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ArchitectureFile {
  DerivedArchitecture architecture;
  Provenance provenance;
  friend bool operator==(const ArchitectureFile&, const ArchitectureFile&) = default;
};

/// Pretty-printed JSON with a fixed key order and a trailing newline.
std::string write_architecture(const ArchitectureFile& file);
/// Strict reader: unknown keys, wrong types and inconsistent lengths are errors.
ArchitectureFile read_architecture(const std::string& text);

// ---- latency table CSV -----------------------------------------------------

std::string write_lut(const LatencyTable& lut);
/// Header `layer,r33_3,r33_6,r55_3,r55_6`, rows numbered 0.., then `overhead,<ms>,,,`.
LatencyTable read_lut(const std::string& text);

/// Runtime samples: header `decisions,measured_ms`, decisions joined with '|'.
std::string write_samples(const std::vector<std::pair<DerivedArchitecture, double>>& samples);
std::vector<std::pair<DerivedArchitecture, double>> read_samples(const std::string& text,
                                                                 const MacroConfig& macro);

// ---- run configuration (key=value) -----------------------------------------

struct DataSpec {
  std::string source = "synth";  // synth | cifar
  int classes = 10;
  std::size_t n_train = 512;
  std::size_t n_eval = 256;
  std::uint64_t seed = 0;
  double separation = 4.0;
  int blobs = 3;
  std::vector<std::string> train_files;
  std::vector<std::string> eval_files;
  friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

struct OracleOptions {
  std::uint64_t cap = 256;
  friend bool operator==(const OracleOptions&, const OracleOptions&) = default;
};

struct RunConfig {
  MacroConfig macro = MacroConfig::desk_default();
  SearchConfig search;
  TrainSchedule train;
  CostModel lut;
  DataSpec data;
  OracleOptions oracle;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Every key, one per line, in a fixed order. read_config(write_config(c)) == c.
std::string write_config(const RunConfig& cfg);
/// Lines are `key = value`; '#' starts a comment. `macro.block = out,layers,stride`
/// may repeat and replaces the preset block list on first use. Unknown or
/// duplicated keys are errors naming the line.
RunConfig read_config(const std::string& text);

/// Parses a `--data` argument: `synth:key=val,...` or a comma list of CIFAR files
/// (`cifar:train=a.bin;b.bin,eval=c.bin`).
DataSpec parse_data_arg(const std::string& arg, const DataSpec& base);
/// Builds the train and eval splits at the macro's input resolution.
std::pair<Dataset, Dataset> load_data(const DataSpec& spec, const MacroConfig& macro);

// ---- checkpoints -----------------------------------------------------------

struct CheckpointEntry {
  std::string name;
  Tensor tensor;
};

/// "SPNAS1", then per entry: u32 name length, name bytes, u32 rank, u64 dims,
/// f64 payload, all little-endian. Entries run to end of file.
std::vector<std::uint8_t> checkpoint_bytes(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> parse_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Parameters of a supernet plus `meta.macro` and `meta.provenance` entries.
std::vector<CheckpointEntry> supernet_checkpoint(const Supernet& net, const Provenance& prov);
/// Rebuilds the supernet from a checkpoint; every parameter must be present with
/// a matching shape and no unexpected entries may remain.
std::pair<Supernet, Provenance> restore_supernet(const std::vector<CheckpointEntry>& entries);

// ---- traces ----------------------------------------------------------------

std::string write_trace_csv(const SearchTrace& trace);
/// One JSON object per epoch snapshot.
std::string write_snapshots_jsonl(const SearchTrace& trace);

// ---- files -----------------------------------------------------------------

std::string read_text_file(const std::string& path);
std::vector<std::uint8_t> read_binary_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& contents);

/// %.17g formatting: round-trips every double.
std::string format_double(double v);

}  // namespace spnas
