#include "spnas/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace spnas {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  return lines;
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw FormatError(what + ": '" + s + "' is not a finite number");
  }
  return v;
}

template <typename Int>
Int parse_integer(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw FormatError(what + ": '" + s + "' is not an integer");
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "true") return true;
  if (t == "false") return false;
  throw FormatError(what + ": expected true or false, got '" + s + "'");
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---- architecture ----

ojson macro_to_json(const MacroConfig& m) {
  ojson blocks = ojson::array();
  for (const auto& b : m.blocks) {
    blocks.push_back(ojson{{"num_layers", b.num_layers},
                           {"out_channels", b.out_channels},
                           {"first_stride", b.first_stride}});
  }
  return ojson{{"stem_channels", m.stem_channels},   {"blocks", blocks},
               {"head_channels", m.head_channels},   {"num_classes", m.num_classes},
               {"width_multiplier", m.width_multiplier},
               {"input_resolution", m.input_resolution}};
}

void require_keys(const ojson& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw FormatError(where + ": unknown key '" + key + "'");
  }
  for (const auto& key : allowed) {
    if (!obj.contains(key)) throw FormatError(where + ": missing key '" + key + "'");
  }
}

int json_int(const ojson& v, const std::string& where) {
  if (!v.is_number_integer()) throw FormatError(where + " must be an integer");
  return v.get<int>();
}

MacroConfig macro_from_json(const ojson& j) {
  require_keys(j,
               {"stem_channels", "blocks", "head_channels", "num_classes", "width_multiplier",
                "input_resolution"},
               "macro");
  MacroConfig m;
  m.stem_channels = json_int(j["stem_channels"], "macro.stem_channels");
  m.head_channels = json_int(j["head_channels"], "macro.head_channels");
  m.num_classes = json_int(j["num_classes"], "macro.num_classes");
  m.input_resolution = json_int(j["input_resolution"], "macro.input_resolution");
  if (!j["width_multiplier"].is_number()) throw FormatError("macro.width_multiplier must be a number");
  m.width_multiplier = j["width_multiplier"].get<double>();
  if (!j["blocks"].is_array()) throw FormatError("macro.blocks must be an array");
  for (std::size_t i = 0; i < j["blocks"].size(); ++i) {
    const ojson& b = j["blocks"][i];
    const std::string where = "macro.blocks[" + std::to_string(i) + "]";
    require_keys(b, {"num_layers", "out_channels", "first_stride"}, where);
    m.blocks.push_back({json_int(b["num_layers"], where + ".num_layers"),
                        json_int(b["out_channels"], where + ".out_channels"),
                        json_int(b["first_stride"], where + ".first_stride")});
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("macro: ") + e.what());
  }
  return m;
}

// ---- config fields ----

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field int_field(std::string key, T RunConfig::*outer, int T::*member) {
  return {key, [outer, member](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [outer, member, key](RunConfig& c, const std::string& v) {
            c.*outer.*member = parse_integer<int>(v, key);
          }};
}

template <typename T>
Field size_field(std::string key, T RunConfig::*outer, std::size_t T::*member) {
  return {key, [outer, member](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [outer, member, key](RunConfig& c, const std::string& v) {
            c.*outer.*member = parse_integer<std::size_t>(v, key);
          }};
}

template <typename T>
Field u64_field(std::string key, T RunConfig::*outer, std::uint64_t T::*member) {
  return {key, [outer, member](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [outer, member, key](RunConfig& c, const std::string& v) {
            c.*outer.*member = parse_integer<std::uint64_t>(v, key);
          }};
}

template <typename T>
Field double_field(std::string key, T RunConfig::*outer, double T::*member) {
  return {key, [outer, member](const RunConfig& c) { return format_double(c.*outer.*member); },
          [outer, member, key](RunConfig& c, const std::string& v) {
            c.*outer.*member = parse_double(v, key);
          }};
}

Field lr_fields_decay(std::string key, LrSchedule& (*pick)(RunConfig&),
                      const LrSchedule& (*cpick)(const RunConfig&)) {
  return {key, [cpick](const RunConfig& c) { return to_string(cpick(c).decay); },
          [pick, key](RunConfig& c, const std::string& v) {
            try {
              pick(c).decay = lr_decay_from_string(trim(v));
            } catch (const std::invalid_argument& e) {
              throw FormatError(key + ": " + e.what());
            }
          }};
}

LrSchedule& search_lr(RunConfig& c) { return c.search.lr; }
const LrSchedule& search_lr_c(const RunConfig& c) { return c.search.lr; }
LrSchedule& train_lr(RunConfig& c) { return c.train.lr; }
const LrSchedule& train_lr_c(const RunConfig& c) { return c.train.lr; }

std::vector<Field> lr_fields(const std::string& prefix, LrSchedule& (*pick)(RunConfig&),
                             const LrSchedule& (*cpick)(const RunConfig&)) {
  std::vector<Field> f;
  f.push_back({prefix + "lr", [cpick](const RunConfig& c) { return format_double(cpick(c).initial); },
               [pick, prefix](RunConfig& c, const std::string& v) {
                 pick(c).initial = parse_double(v, prefix + "lr");
               }});
  f.push_back(lr_fields_decay(prefix + "lr_decay", pick, cpick));
  f.push_back({prefix + "lr_step_gamma",
               [cpick](const RunConfig& c) { return format_double(cpick(c).step_gamma); },
               [pick, prefix](RunConfig& c, const std::string& v) {
                 pick(c).step_gamma = parse_double(v, prefix + "lr_step_gamma");
               }});
  f.push_back({prefix + "lr_step_epochs",
               [cpick](const RunConfig& c) { return std::to_string(cpick(c).step_epochs); },
               [pick, prefix](RunConfig& c, const std::string& v) {
                 pick(c).step_epochs = parse_integer<int>(v, prefix + "lr_step_epochs");
               }});
  return f;
}

const std::vector<Field>& config_fields() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    using R = RunConfig;
    f.push_back(int_field("macro.stem_channels", &R::macro, &MacroConfig::stem_channels));
    f.push_back(int_field("macro.head_channels", &R::macro, &MacroConfig::head_channels));
    f.push_back(int_field("macro.num_classes", &R::macro, &MacroConfig::num_classes));
    f.push_back(double_field("macro.width_multiplier", &R::macro, &MacroConfig::width_multiplier));
    f.push_back(int_field("macro.input_resolution", &R::macro, &MacroConfig::input_resolution));

    f.push_back(double_field("search.lambda", &R::search, &SearchConfig::lambda));
    f.push_back(int_field("search.epochs", &R::search, &SearchConfig::epochs));
    f.push_back(size_field("search.batch_size", &R::search, &SearchConfig::batch_size));
    for (auto& x : lr_fields("search.", search_lr, search_lr_c)) f.push_back(std::move(x));
    f.push_back(double_field("search.momentum", &R::search, &SearchConfig::momentum));
    f.push_back(double_field("search.weight_decay", &R::search, &SearchConfig::weight_decay));
    f.push_back({"search.dropout_p_start",
                 [](const R& c) { return format_double(c.search.dropout.p_start); },
                 [](R& c, const std::string& v) {
                   c.search.dropout.p_start = parse_double(v, "search.dropout_p_start");
                 }});
    f.push_back({"search.dropout_p_end",
                 [](const R& c) { return format_double(c.search.dropout.p_end); },
                 [](R& c, const std::string& v) {
                   c.search.dropout.p_end = parse_double(v, "search.dropout_p_end");
                 }});
    f.push_back({"search.dropout_active_fraction",
                 [](const R& c) { return format_double(c.search.dropout.active_epoch_fraction); },
                 [](R& c, const std::string& v) {
                   c.search.dropout.active_epoch_fraction =
                       parse_double(v, "search.dropout_active_fraction");
                 }});
    f.push_back(u64_field("search.seed", &R::search, &SearchConfig::seed));
    f.push_back({"search.temperature",
                 [](const R& c) { return format_double(c.search.indicator.temperature); },
                 [](R& c, const std::string& v) {
                   c.search.indicator.temperature = parse_double(v, "search.temperature");
                 }});
    f.push_back({"search.indicator_mode",
                 [](const R& c) { return to_string(c.search.indicator.mode); },
                 [](R& c, const std::string& v) {
                   try {
                     c.search.indicator.mode = indicator_mode_from_string(trim(v));
                   } catch (const std::invalid_argument& e) {
                     throw FormatError(std::string("search.indicator_mode: ") + e.what());
                   }
                 }});
    f.push_back(double_field("search.runtime_floor_ms", &R::search, &SearchConfig::runtime_floor_ms));
    f.push_back(double_field("search.grad_clip_norm", &R::search, &SearchConfig::grad_clip_norm));

    f.push_back(int_field("train.epochs", &R::train, &TrainSchedule::epochs));
    f.push_back(size_field("train.batch_size", &R::train, &TrainSchedule::batch_size));
    for (auto& x : lr_fields("train.", train_lr, train_lr_c)) f.push_back(std::move(x));
    f.push_back(double_field("train.momentum", &R::train, &TrainSchedule::momentum));
    f.push_back(double_field("train.weight_decay", &R::train, &TrainSchedule::weight_decay));
    f.push_back(u64_field("train.seed", &R::train, &TrainSchedule::seed));
    f.push_back({"train.flip", [](const R& c) { return std::string(c.train.augment.flip ? "true" : "false"); },
                 [](R& c, const std::string& v) { c.train.augment.flip = parse_bool(v, "train.flip"); }});
    f.push_back({"train.crop_pad", [](const R& c) { return std::to_string(c.train.augment.crop_pad); },
                 [](R& c, const std::string& v) {
                   c.train.augment.crop_pad = parse_integer<int>(v, "train.crop_pad");
                 }});

    f.push_back(double_field("lut.ms_per_mac", &R::lut, &CostModel::ms_per_mac));
    f.push_back(double_field("lut.noise", &R::lut, &CostModel::noise));
    f.push_back(u64_field("lut.seed", &R::lut, &CostModel::seed));

    f.push_back({"data.source", [](const R& c) { return c.data.source; },
                 [](R& c, const std::string& v) {
                   const std::string t = trim(v);
                   if (t != "synth" && t != "cifar") {
                     throw FormatError("data.source: expected synth or cifar, got '" + v + "'");
                   }
                   c.data.source = t;
                 }});
    f.push_back(int_field("data.classes", &R::data, &DataSpec::classes));
    f.push_back(size_field("data.n_train", &R::data, &DataSpec::n_train));
    f.push_back(size_field("data.n_eval", &R::data, &DataSpec::n_eval));
    f.push_back(u64_field("data.seed", &R::data, &DataSpec::seed));
    f.push_back(double_field("data.separation", &R::data, &DataSpec::separation));
    f.push_back(int_field("data.blobs", &R::data, &DataSpec::blobs));
    f.push_back({"data.train_files", [](const R& c) { return join(c.data.train_files, ';'); },
                 [](R& c, const std::string& v) {
                   c.data.train_files.clear();
                   for (const auto& p : split(trim(v), ';'))
                     if (!trim(p).empty()) c.data.train_files.push_back(trim(p));
                 }});
    f.push_back({"data.eval_files", [](const R& c) { return join(c.data.eval_files, ';'); },
                 [](R& c, const std::string& v) {
                   c.data.eval_files.clear();
                   for (const auto& p : split(trim(v), ';'))
                     if (!trim(p).empty()) c.data.eval_files.push_back(trim(p));
                 }});

    f.push_back(u64_field("oracle.cap", &R::oracle, &OracleOptions::cap));
    return f;
  }();
  return fields;
}

// ---- checkpoint helpers ----

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) +
                        " while reading " + what);
    }
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  void raw(void* dst, std::size_t n, const std::string& what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[] = "SPNAS1";
constexpr std::size_t kMagicLen = 6;

std::vector<double> macro_vector(const MacroConfig& m) {
  std::vector<double> v{static_cast<double>(m.stem_channels), static_cast<double>(m.head_channels),
                        static_cast<double>(m.num_classes), m.width_multiplier,
                        static_cast<double>(m.input_resolution)};
  for (const auto& b : m.blocks) {
    v.push_back(b.num_layers);
    v.push_back(b.out_channels);
    v.push_back(b.first_stride);
  }
  return v;
}

int as_int(double v, const std::string& what) {
  if (v != std::floor(v) || std::abs(v) > 1e9) throw FormatError(what + " is not an integer");
  return static_cast<int>(v);
}

MacroConfig macro_from_vector(std::span<const double> v) {
  if (v.size() < 5 || (v.size() - 5) % 3 != 0) throw FormatError("meta.macro has a malformed length");
  MacroConfig m;
  m.stem_channels = as_int(v[0], "meta.macro stem_channels");
  m.head_channels = as_int(v[1], "meta.macro head_channels");
  m.num_classes = as_int(v[2], "meta.macro num_classes");
  m.width_multiplier = v[3];
  m.input_resolution = as_int(v[4], "meta.macro input_resolution");
  for (std::size_t i = 5; i < v.size(); i += 3) {
    m.blocks.push_back({as_int(v[i], "meta.macro block"), as_int(v[i + 1], "meta.macro block"),
                        as_int(v[i + 2], "meta.macro block")});
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("meta.macro: ") + e.what());
  }
  return m;
}

}  // namespace

// ---- architecture ----

std::string write_architecture(const ArchitectureFile& file) {
  ojson decisions = ojson::array();
  for (const auto& d : file.architecture.decisions) {
    if (d.is_skip()) {
      decisions.push_back("skip");
    } else {
      decisions.push_back(ojson{{"k", d.kernel()}, {"e", d.expansion()}});
    }
  }
  ojson doc{{"macro", macro_to_json(file.architecture.macro)},
            {"decisions", decisions},
            {"provenance", ojson{{"seed", file.provenance.seed},
                                 {"lambda", file.provenance.lambda},
                                 {"search_steps", file.provenance.search_steps}}}};
  return doc.dump(2) + "\n";
}

ArchitectureFile read_architecture(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw FormatError(std::string("architecture JSON: ") + e.what());
  }
  require_keys(doc, {"macro", "decisions", "provenance"}, "architecture");
  ArchitectureFile file;
  file.architecture.macro = macro_from_json(doc["macro"]);
  if (!doc["decisions"].is_array()) throw FormatError("decisions must be an array");
  for (std::size_t i = 0; i < doc["decisions"].size(); ++i) {
    const ojson& d = doc["decisions"][i];
    const std::string where = "decisions[" + std::to_string(i) + "]";
    if (d.is_string()) {
      if (d.get<std::string>() != "skip") throw FormatError(where + ": expected \"skip\"");
      file.architecture.decisions.push_back(LayerDecision::skip());
      continue;
    }
    require_keys(d, {"k", "e"}, where);
    try {
      file.architecture.decisions.push_back(
          LayerDecision::mbconv(json_int(d["k"], where + ".k"), json_int(d["e"], where + ".e")));
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  try {
    file.architecture.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("architecture: ") + e.what());
  }
  const ojson& p = doc["provenance"];
  require_keys(p, {"seed", "lambda", "search_steps"}, "provenance");
  if (!p["seed"].is_number_unsigned() && !(p["seed"].is_number_integer() && p["seed"].get<long long>() >= 0)) {
    throw FormatError("provenance.seed must be a non-negative integer");
  }
  if (!p["lambda"].is_number()) throw FormatError("provenance.lambda must be a number");
  if (!p["search_steps"].is_number_integer()) throw FormatError("provenance.search_steps must be an integer");
  file.provenance.seed = p["seed"].get<std::uint64_t>();
  file.provenance.lambda = p["lambda"].get<double>();
  file.provenance.search_steps = p["search_steps"].get<std::size_t>();
  return file;
}

// ---- LUT ----

std::string write_lut(const LatencyTable& lut) {
  std::string out = "layer,r33_3,r33_6,r55_3,r55_6\n";
  for (std::size_t i = 0; i < lut.layers.size(); ++i) {
    const auto& l = lut.layers[i];
    out += std::to_string(i) + "," + format_double(l.r33_3) + "," + format_double(l.r33_6) + "," +
           format_double(l.r55_3) + "," + format_double(l.r55_6) + "\n";
  }
  out += "overhead," + format_double(lut.fixed_overhead_ms) + ",,,\n";
  return out;
}

LatencyTable read_lut(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "layer,r33_3,r33_6,r55_3,r55_6") {
    throw FormatError("LUT line 1: expected header 'layer,r33_3,r33_6,r55_3,r55_6'");
  }
  LatencyTable lut;
  bool have_overhead = false;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string where = "LUT line " + std::to_string(n + 1);
    if (have_overhead) throw FormatError(where + ": content after the overhead row");
    const auto cols = split(lines[n], ',');
    if (cols.size() != 5) {
      throw FormatError(where + ": expected 5 columns, got " + std::to_string(cols.size()));
    }
    if (trim(cols[0]) == "overhead") {
      for (int c = 2; c < 5; ++c)
        if (!trim(cols[c]).empty()) throw FormatError(where + ": overhead row must be 'overhead,<ms>,,,'");
      lut.fixed_overhead_ms = parse_double(cols[1], where + " overhead");
      if (lut.fixed_overhead_ms < 0.0) throw FormatError(where + ": overhead must not be negative");
      have_overhead = true;
      continue;
    }
    const auto idx = parse_integer<std::size_t>(cols[0], where + " layer index");
    if (idx != lut.layers.size()) {
      throw FormatError(where + ": expected layer " + std::to_string(lut.layers.size()) +
                        ", got " + std::to_string(idx));
    }
    LayerLatency l;
    double* slots[4] = {&l.r33_3, &l.r33_6, &l.r55_3, &l.r55_6};
    static const char* names[4] = {"r33_3", "r33_6", "r55_3", "r55_6"};
    for (int c = 0; c < 4; ++c) {
      *slots[c] = parse_double(cols[c + 1], where + " " + names[c]);
      if (!(*slots[c] > 0.0)) {
        throw FormatError(where + ": " + names[c] + " must be positive, got " + trim(cols[c + 1]));
      }
    }
    lut.layers.push_back(l);
  }
  if (!have_overhead) throw FormatError("LUT: missing trailing 'overhead,<ms>,,,' row");
  return lut;
}

std::string write_samples(const std::vector<std::pair<DerivedArchitecture, double>>& samples) {
  std::string out = "decisions,measured_ms\n";
  for (const auto& [arch, ms] : samples) {
    std::vector<std::string> parts;
    for (const auto& d : arch.decisions) parts.push_back(d.to_string());
    out += join(parts, '|') + "," + format_double(ms) + "\n";
  }
  return out;
}

std::vector<std::pair<DerivedArchitecture, double>> read_samples(const std::string& text,
                                                                 const MacroConfig& macro) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "decisions,measured_ms") {
    throw FormatError("samples line 1: expected header 'decisions,measured_ms'");
  }
  std::vector<std::pair<DerivedArchitecture, double>> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string where = "samples line " + std::to_string(n + 1);
    const auto cols = split(lines[n], ',');
    if (cols.size() != 2) throw FormatError(where + ": expected 2 columns");
    DerivedArchitecture arch{macro, {}};
    for (const auto& tok : split(trim(cols[0]), '|')) {
      try {
        arch.decisions.push_back(LayerDecision::parse(trim(tok)));
      } catch (const std::invalid_argument& e) {
        throw FormatError(where + ": " + e.what());
      }
    }
    try {
      arch.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    const double ms = parse_double(cols[1], where + " measured_ms");
    if (!(ms > 0.0)) throw FormatError(where + ": measured_ms must be positive");
    out.emplace_back(std::move(arch), ms);
  }
  if (out.empty()) throw FormatError("samples: no rows");
  return out;
}

// ---- config ----

std::string write_config(const RunConfig& cfg) {
  std::string out;
  const auto& fields = config_fields();
  for (const auto& f : fields) {
    if (f.key == "macro.input_resolution") {
      out += f.key + " = " + f.get(cfg) + "\n";
      for (const auto& b : cfg.macro.blocks) {
        out += "macro.block = " + std::to_string(b.out_channels) + "," +
               std::to_string(b.num_layers) + "," + std::to_string(b.first_stride) + "\n";
      }
      continue;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

RunConfig read_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : config_fields()) by_key[f.key] = &f;
  std::set<std::string> seen;
  bool blocks_started = false;
  bool macro_touched = false;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string where = "config line " + std::to_string(n + 1);
    std::string line = lines[n];
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "macro.preset") {
        if (macro_touched) throw FormatError("macro.preset must precede other macro keys");
        if (value == "desk") {
          cfg.macro = MacroConfig::desk_default();
        } else if (value == "full") {
          cfg.macro = MacroConfig::full_scale();
        } else {
          throw FormatError("macro.preset: expected desk or full, got '" + value + "'");
        }
        macro_touched = true;
        continue;
      }
      if (key.rfind("macro.", 0) == 0) macro_touched = true;
      if (key == "macro.block") {
        if (!blocks_started) cfg.macro.blocks.clear();
        blocks_started = true;
        const auto parts = split(value, ',');
        if (parts.size() != 3) throw FormatError("macro.block: expected out,layers,stride");
        cfg.macro.blocks.push_back({parse_integer<int>(parts[1], "macro.block layers"),
                                    parse_integer<int>(parts[0], "macro.block out"),
                                    parse_integer<int>(parts[2], "macro.block stride")});
        continue;
      }
      const auto it = by_key.find(key);
      if (it == by_key.end()) throw FormatError("unknown key '" + key + "'");
      if (!seen.insert(key).second) throw FormatError("duplicate key '" + key + "'");
      it->second->set(cfg, value);
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  try {
    cfg.macro.validate();
    cfg.search.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

DataSpec parse_data_arg(const std::string& arg, const DataSpec& base) {
  DataSpec spec = base;
  const auto colon = arg.find(':');
  const std::string kind = arg.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : arg.substr(colon + 1);
  if (kind != "synth" && kind != "cifar") {
    throw FormatError("--data: expected synth:... or cifar:..., got '" + arg + "'");
  }
  spec.source = kind;
  if (rest.empty()) return spec;
  for (const auto& item : split(rest, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("--data: expected key=value, got '" + item + "'");
    const std::string k = trim(item.substr(0, eq));
    const std::string v = trim(item.substr(eq + 1));
    const std::string what = "--data " + k;
    if (kind == "cifar") {
      if (k == "train") {
        spec.train_files = split(v, ';');
      } else if (k == "eval") {
        spec.eval_files = split(v, ';');
      } else {
        throw FormatError("--data: unknown cifar key '" + k + "'");
      }
    } else if (k == "classes") {
      spec.classes = parse_integer<int>(v, what);
    } else if (k == "n_train") {
      spec.n_train = parse_integer<std::size_t>(v, what);
    } else if (k == "n_eval") {
      spec.n_eval = parse_integer<std::size_t>(v, what);
    } else if (k == "seed") {
      spec.seed = parse_integer<std::uint64_t>(v, what);
    } else if (k == "separation") {
      spec.separation = parse_double(v, what);
    } else if (k == "blobs") {
      spec.blobs = parse_integer<int>(v, what);
    } else {
      throw FormatError("--data: unknown synth key '" + k + "'");
    }
  }
  return spec;
}

std::pair<Dataset, Dataset> load_data(const DataSpec& spec, const MacroConfig& macro) {
  if (spec.source == "cifar") {
    if (macro.input_resolution != 32 || macro.num_classes != 10) {
      throw std::invalid_argument("CIFAR-10 data needs input_resolution 32 and 10 classes");
    }
    if (spec.train_files.empty() || spec.eval_files.empty()) {
      throw std::invalid_argument("CIFAR-10 data needs both train and eval files");
    }
    return {load_cifar10_binary(spec.train_files), load_cifar10_binary(spec.eval_files)};
  }
  if (spec.classes != macro.num_classes) {
    throw std::invalid_argument("data has " + std::to_string(spec.classes) +
                                " classes but the macro expects " +
                                std::to_string(macro.num_classes));
  }
  SynthSpec s;
  s.classes = spec.classes;
  s.resolution = static_cast<std::size_t>(macro.input_resolution);
  s.seed = spec.seed;
  s.separation = spec.separation;
  s.blobs_per_class = spec.blobs;
  s.n = spec.n_train;
  s.split = Split::train;
  Dataset train = synth_dataset(s);
  s.n = spec.n_eval;
  s.split = Split::eval;
  return {std::move(train), synth_dataset(s)};
}

// ---- checkpoints ----

std::vector<std::uint8_t> checkpoint_bytes(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) put_u64(out, d);
    const auto data = e.tensor.data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
    out.insert(out.end(), raw, raw + data.size() * sizeof(double));
  }
  return out;
}

std::vector<CheckpointEntry> parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("checkpoint: missing SPNAS1 magic at byte offset 0");
  }
  Reader r(bytes);
  char magic[kMagicLen];
  r.raw(magic, kMagicLen, "magic");
  std::vector<CheckpointEntry> out;
  std::set<std::string> names;
  while (!r.done()) {
    const std::size_t start = r.offset();
    const std::uint32_t len = r.u32("name length");
    std::string name(len, '\0');
    r.raw(name.data(), len, "name");
    if (!names.insert(name).second) {
      throw FormatError("checkpoint: duplicate entry '" + name + "' at byte offset " +
                        std::to_string(start));
    }
    const std::uint32_t rank = r.u32("rank of " + name);
    if (rank > 8) throw FormatError("checkpoint: entry '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(r.u64("dims of " + name));
      if (shape.back() != 0 && count > (std::size_t(1) << 40) / shape.back()) {
        throw FormatError("checkpoint: entry '" + name + "' is implausibly large");
      }
      count *= shape.back();
    }
    std::vector<double> values(count);
    r.raw(values.data(), count * sizeof(double), "payload of " + name);
    out.push_back({name, Tensor(shape, std::move(values))});
  }
  return out;
}

std::vector<CheckpointEntry> supernet_checkpoint(const Supernet& net, const Provenance& prov) {
  std::vector<CheckpointEntry> out;
  const std::vector<double> macro = macro_vector(net.macro());
  out.push_back({"meta.macro", Tensor({macro.size()}, macro)});
  out.push_back({"meta.provenance",
                 Tensor({3}, {static_cast<double>(prov.seed), prov.lambda,
                              static_cast<double>(prov.search_steps)})});
  for (const auto& p : net.parameters()) out.push_back({p.name, p.tensor.clone()});
  return out;
}

std::pair<Supernet, Provenance> restore_supernet(const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  auto take = [&](const std::string& name) -> const Tensor& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing entry '" + name + "'");
    const Tensor* t = it->second;
    by_name.erase(it);
    return *t;
  };
  const MacroConfig macro = macro_from_vector(take("meta.macro").data());
  const Tensor& prov_t = take("meta.provenance");
  if (prov_t.numel() != 3) throw FormatError("checkpoint: meta.provenance must hold 3 values");
  Provenance prov;
  prov.seed = static_cast<std::uint64_t>(prov_t[0]);
  prov.lambda = prov_t[1];
  prov.search_steps = static_cast<std::size_t>(prov_t[2]);

  std::mt19937_64 rng(0);
  Supernet net(macro, rng);
  for (const auto& p : net.parameters()) {
    const Tensor& src = take(p.name);
    if (src.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint: entry '" + p.name + "' has shape " + shape_str(src.shape()) +
                        ", expected " + shape_str(p.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p.tensor.mutable_data().begin());
  }
  if (!by_name.empty()) {
    throw FormatError("checkpoint: unexpected entry '" + by_name.begin()->first + "'");
  }
  return {std::move(net), prov};
}

// ---- traces ----

std::string write_trace_csv(const SearchTrace& trace) {
  std::string out = "step,ce,runtime_ms,total\n";
  for (const auto& s : trace.steps) {
    out += std::to_string(s.step) + "," + format_double(s.ce) + "," + format_double(s.runtime_ms) +
           "," + format_double(s.total) + "\n";
  }
  return out;
}

std::string write_snapshots_jsonl(const SearchTrace& trace) {
  std::string out;
  for (const auto& snap : trace.snapshots) {
    ojson layers = ojson::array();
    for (const auto& l : snap.layers) {
      layers.push_back(ojson{{"norm_sq_shell", l.norm_sq_shell},
                             {"norm_sq_half3", l.norm_sq_half3},
                             {"norm_sq_half6", l.norm_sq_half6},
                             {"t_k5", l.t_k5},
                             {"t_e3", l.t_e3},
                             {"t_e6", l.t_e6},
                             {"ind_k5", l.ind_k5},
                             {"ind_e3", l.ind_e3},
                             {"ind_e6", l.ind_e6},
                             {"derived", l.derived.to_string()}});
    }
    out += ojson{{"epoch", snap.epoch}, {"step", snap.step}, {"layers", layers}}.dump() + "\n";
  }
  return out;
}

// ---- files ----

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  const std::string s = read_text_file(path);
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& contents) {
  write_file_atomic(path, std::string(contents.begin(), contents.end()));
}

}  // namespace spnas
