#include "spnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spnas/ops.hpp"

namespace spnas {
namespace {

// Uniform(-b, b) with b = gain * sqrt(3 / fan_in): variance gain^2 / fan_in.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  Tensor t(std::move(shape), true);
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

const double kReluGain = std::sqrt(2.0);

Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }
Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }

Stem make_stem(const NetworkPlan& plan, std::mt19937_64& rng) {
  const auto c = static_cast<std::size_t>(plan.stem_channels);
  return {fan_in_uniform({c, 3, 3, 3}, 27, kReluGain, rng), ones(c), zeros(c)};
}

Head make_head(const NetworkPlan& plan, std::mt19937_64& rng) {
  const auto cin = static_cast<std::size_t>(plan.head_in_channels);
  const auto h = static_cast<std::size_t>(plan.head_channels);
  const auto k = static_cast<std::size_t>(plan.num_classes);
  Head head;
  head.pw = fan_in_uniform({h, cin}, cin, kReluGain, rng);
  head.scale = ones(h);
  head.bias = zeros(h);
  head.fc_w = fan_in_uniform({k, h}, h, 1.0, rng);
  head.fc_b = zeros(k);
  return head;
}

// Expand-side parameters are drawn before the depthwise kernel, projection after.
MBConvParams make_expand(const LayerGeometry& g, std::size_t expanded, std::mt19937_64& rng) {
  const auto cin = static_cast<std::size_t>(g.in_channels);
  MBConvParams p;
  p.expand = fan_in_uniform({expanded, cin}, cin, kReluGain, rng);
  p.expand_scale = ones(expanded);
  p.expand_bias = zeros(expanded);
  p.dw_scale = ones(expanded);
  return p;
}

void make_project(MBConvParams& p, const LayerGeometry& g, std::size_t expanded,
                  std::mt19937_64& rng) {
  const auto cout = static_cast<std::size_t>(g.out_channels);
  p.project = fan_in_uniform({cout, expanded}, expanded, 1.0, rng);
  p.project_scale = ones(cout);
}

void append_stem(std::vector<NamedParam>& out, const Stem& s) {
  out.push_back({"stem.conv", s.conv, ParamKind::weight});
  out.push_back({"stem.scale", s.scale, ParamKind::affine});
  out.push_back({"stem.bias", s.bias, ParamKind::affine});
}

void append_head(std::vector<NamedParam>& out, const Head& h) {
  out.push_back({"head.pw", h.pw, ParamKind::weight});
  out.push_back({"head.scale", h.scale, ParamKind::affine});
  out.push_back({"head.bias", h.bias, ParamKind::affine});
  out.push_back({"head.fc.w", h.fc_w, ParamKind::weight});
  out.push_back({"head.fc.b", h.fc_b, ParamKind::affine});
}

void append_mbconv(std::vector<NamedParam>& out, const std::string& prefix, const MBConvParams& p,
                   const Tensor& dw) {
  out.push_back({prefix + "expand", p.expand, ParamKind::weight});
  out.push_back({prefix + "expand_scale", p.expand_scale, ParamKind::affine});
  out.push_back({prefix + "expand_bias", p.expand_bias, ParamKind::affine});
  out.push_back({prefix + "dw", dw, ParamKind::weight});
  out.push_back({prefix + "dw_scale", p.dw_scale, ParamKind::affine});
  out.push_back({prefix + "project", p.project, ParamKind::weight});
  out.push_back({prefix + "project_scale", p.project_scale, ParamKind::affine});
}

std::size_t count(const std::vector<NamedParam>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

// Copies the leading `n` entries of each row block.
Tensor copy_prefix(const Tensor& src, std::size_t rows) {
  Shape shape = src.shape();
  const std::size_t row_size = src.numel() / shape[0];
  shape[0] = rows;
  std::vector<double> values(src.data().begin(),
                             src.data().begin() + static_cast<long>(rows * row_size));
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor copy_columns(const Tensor& src, std::size_t cols) {
  const std::size_t rows = src.dim(0), stride = src.dim(1);
  std::vector<double> values(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) values[r * cols + c] = src[r * stride + c];
  return Tensor({rows, cols}, std::move(values), true);
}

// [C,5,5] superkernel -> [channels, k, k] centered crop.
Tensor crop_kernel(const Tensor& sk, std::size_t channels, std::size_t k) {
  const std::size_t off = (SuperKernel::kKernel - k) / 2;
  Tensor out({channels, k, k}, true);
  auto o = out.mutable_data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        o[(c * k + i) * k + j] =
            sk[(c * SuperKernel::kKernel + i + off) * SuperKernel::kKernel + j + off];
  return out;
}

Tensor deep_copy(const Tensor& t) {
  Tensor c(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true);
  return c;
}

}  // namespace

void MacroConfig::validate() const {
  if (blocks.empty()) throw std::invalid_argument("macro config needs at least one block");
  if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
    throw std::invalid_argument("width_multiplier must be positive");
  }
  if (stem_channels <= 0) throw std::invalid_argument("stem_channels must be positive");
  if (head_channels <= 0) throw std::invalid_argument("head_channels must be positive");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  if (input_resolution < 1) throw std::invalid_argument("input_resolution must be positive");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string where = "block " + std::to_string(i) + ": ";
    if (b.num_layers < 1 || b.num_layers > 4) {
      throw std::invalid_argument(where + "num_layers must be in 1..4");
    }
    if (b.out_channels <= 0) throw std::invalid_argument(where + "out_channels must be positive");
    if (b.first_stride != 1 && b.first_stride != 2) {
      throw std::invalid_argument(where + "first_stride must be 1 or 2");
    }
  }
}

std::size_t MacroConfig::num_searchable_layers() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += static_cast<std::size_t>(b.num_layers);
  return n;
}

MacroConfig MacroConfig::desk_default() {
  MacroConfig c;
  c.stem_channels = 8;
  c.blocks = {{2, 16, 1}, {2, 24, 2}, {2, 32, 2}};
  c.head_channels = 64;
  c.num_classes = 10;
  c.width_multiplier = 1.0;
  c.input_resolution = 32;
  return c;
}

MacroConfig MacroConfig::full_scale() {
  MacroConfig c;
  c.stem_channels = 32;
  c.blocks = {{1, 16, 1}, {4, 24, 2}, {4, 32, 2}, {4, 64, 2},
              {4, 112, 1}, {4, 184, 2}, {1, 352, 1}};
  c.head_channels = 1280;
  c.num_classes = 1000;
  c.width_multiplier = 1.0;
  c.input_resolution = 224;
  return c;
}

int scaled_channels(int channels, double width_multiplier) {
  const long rounded = std::lround(static_cast<double>(channels) * width_multiplier / 2.0) * 2;
  return static_cast<int>(std::max(2L, rounded));
}

NetworkPlan plan_network(const MacroConfig& cfg) {
  cfg.validate();
  NetworkPlan plan;
  plan.input_resolution = cfg.input_resolution;
  plan.stem_channels = scaled_channels(cfg.stem_channels, cfg.width_multiplier);
  plan.stem_resolution = (cfg.input_resolution + 1) / 2;
  int channels = plan.stem_channels;
  int res = plan.stem_resolution;
  for (const auto& block : cfg.blocks) {
    const int out = scaled_channels(block.out_channels, cfg.width_multiplier);
    for (int l = 0; l < block.num_layers; ++l) {
      LayerGeometry g;
      g.index = plan.layers.size();
      g.in_channels = channels;
      g.out_channels = out;
      g.stride = l == 0 ? block.first_stride : 1;
      g.in_resolution = res;
      g.out_resolution = (res + g.stride - 1) / g.stride;
      g.residual = g.stride == 1 && g.in_channels == g.out_channels;
      plan.layers.push_back(g);
      channels = out;
      res = g.out_resolution;
    }
  }
  plan.head_in_channels = channels;
  plan.head_channels = scaled_channels(cfg.head_channels, cfg.width_multiplier);
  plan.head_resolution = res;
  plan.num_classes = cfg.num_classes;
  return plan;
}

void DerivedArchitecture::validate() const {
  const NetworkPlan plan = plan_network(macro);
  if (decisions.size() != plan.layers.size()) {
    throw std::invalid_argument("architecture has " + std::to_string(decisions.size()) +
                                " decisions but the macro has " +
                                std::to_string(plan.layers.size()) + " searchable layers");
  }
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].is_skip() && !plan.layers[i].skip_allowed()) {
      throw std::invalid_argument("layer " + std::to_string(i) +
                                  " cannot be skipped (stride 2 or channel change)");
    }
  }
}

std::string DerivedArchitecture::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (i) s += ',';
    s += decisions[i].to_string();
  }
  return s;
}

Tensor Stem::forward(Tape& tape, const Tensor& x) const {
  Tensor h = ops::conv2d(tape, x, conv, 2);
  h = ops::channel_affine(tape, h, scale, bias);
  return ops::relu6(tape, h);
}

Tensor Head::forward(Tape& tape, const Tensor& x) const {
  Tensor h = ops::conv2d_pointwise(tape, x, pw);
  h = ops::channel_affine(tape, h, scale, bias);
  h = ops::relu6(tape, h);
  h = ops::global_avg_pool(tape, h);
  return ops::dense(tape, h, fc_w, fc_b);
}

Tensor MBConvParams::forward(Tape& tape, const Tensor& x, const Tensor& dw_kernel, int stride,
                             bool residual) const {
  Tensor h = ops::conv2d_pointwise(tape, x, expand);
  h = ops::channel_affine(tape, h, expand_scale, expand_bias);
  h = ops::relu6(tape, h);
  h = ops::conv2d_depthwise(tape, h, dw_kernel, stride);
  h = ops::channel_affine(tape, h, dw_scale, Tensor());
  h = ops::relu6(tape, h);
  h = ops::conv2d_pointwise(tape, h, project);
  h = ops::channel_affine(tape, h, project_scale, Tensor());
  return residual ? ops::add(tape, h, x) : h;
}

Supernet::Supernet(MacroConfig cfg, std::mt19937_64& rng)
    : macro_(std::move(cfg)), plan_(plan_network(macro_)) {
  stem_ = make_stem(plan_, rng);
  for (const auto& g : plan_.layers) {
    const auto expanded = static_cast<std::size_t>(g.in_channels) * 6;
    MBConvParams p = make_expand(g, expanded, rng);
    SuperKernel sk(expanded, g.skip_allowed(), g.index);
    sk.initialize(rng);
    make_project(p, g, expanded, rng);
    layers_.push_back(std::move(p));
    kernels_.push_back(std::move(sk));
  }
  head_ = make_head(plan_, rng);
}

SupernetOutput Supernet::forward(Tape& tape, const Tensor& x,
                                 const SupernetForwardOptions& opts) const {
  if (!opts.overrides.empty() && opts.overrides.size() != kernels_.size()) {
    throw std::invalid_argument("supernet forward: " + std::to_string(opts.overrides.size()) +
                                " overrides for " + std::to_string(kernels_.size()) + " layers");
  }
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("supernet input must be [N,3,H,W], got " + shape_str(x.shape()));
  }
  SupernetOutput out;
  Tensor h = stem_.forward(tape, x);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const GateOverride over = opts.overrides.empty() ? GateOverride{} : opts.overrides[i];
    SuperKernel::Output sk = kernels_[i].evaluate(tape, opts.indicator, over);
    const auto& g = plan_.layers[i];
    h = layers_[i].forward(tape, h, sk.kernel, g.stride, g.residual);
    out.gates.push_back(std::move(sk.gates));
  }
  out.logits = head_.forward(tape, h);
  return out;
}

std::vector<NamedParam> Supernet::parameters() const {
  std::vector<NamedParam> out;
  append_stem(out, stem_);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i) + ".";
    append_mbconv(out, prefix, layers_[i], kernels_[i].weights());
    out.push_back({prefix + "t_k5", kernels_[i].t_k5(), ParamKind::threshold});
    out.push_back({prefix + "t_e3", kernels_[i].t_e3(), ParamKind::threshold});
    out.push_back({prefix + "t_e6", kernels_[i].t_e6(), ParamKind::threshold});
  }
  append_head(out, head_);
  return out;
}

std::size_t Supernet::num_parameters() const { return count(parameters()); }

std::vector<DecisionSnapshot> Supernet::snapshots() const {
  std::vector<DecisionSnapshot> out;
  for (const auto& sk : kernels_) out.push_back(sk.derive_decision());
  return out;
}

DerivedArchitecture Supernet::derive() const {
  DerivedArchitecture arch{macro_, {}};
  for (const auto& s : snapshots()) arch.decisions.push_back(s.derived);
  return arch;
}

Supernet build_supernet(const MacroConfig& cfg, std::mt19937_64& rng) { return Supernet(cfg, rng); }

Tensor DiscreteNet::forward(Tape& tape, const Tensor& x, const DiscreteForwardOptions& opts) const {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("network input must be [N,3,H,W], got " + shape_str(x.shape()));
  }
  Tensor h = stem_.forward(tape, x);
  for (const auto& layer : layers_) {
    Tensor kernel = layer.dw;
    if (opts.inner_kernels_only && layer.decision.kernel() == 5) {
      kernel = ops::scale_masked(tape, kernel, WeightView(layer.dw, Subset::shell).mask(),
                                 Tensor::scalar(0.0));
    }
    h = layer.params.forward(tape, h, kernel, layer.geometry.stride, layer.geometry.residual);
  }
  return head_.forward(tape, h);
}

std::vector<NamedParam> DiscreteNet::parameters() const {
  std::vector<NamedParam> out;
  append_stem(out, stem_);
  for (const auto& layer : layers_) {
    append_mbconv(out, "layers." + std::to_string(layer.geometry.index) + ".", layer.params,
                  layer.dw);
  }
  append_head(out, head_);
  return out;
}

std::size_t DiscreteNet::num_parameters() const { return count(parameters()); }

DiscreteNet build_discrete(const DerivedArchitecture& arch, const Supernet* source,
                           std::mt19937_64& rng) {
  arch.validate();
  if (source && !(source->macro() == arch.macro)) {
    throw std::invalid_argument("build_discrete: architecture macro differs from the supernet's");
  }
  const NetworkPlan plan = plan_network(arch.macro);
  DiscreteNet net;
  net.arch_ = arch;
  if (source) {
    const Stem& s = source->stem();
    net.stem_ = {deep_copy(s.conv), deep_copy(s.scale), deep_copy(s.bias)};
  } else {
    net.stem_ = make_stem(plan, rng);
  }
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const LayerDecision& d = arch.decisions[i];
    const LayerGeometry& g = plan.layers[i];
    if (d.is_skip()) continue;
    const auto expanded = static_cast<std::size_t>(g.in_channels * d.expansion());
    const auto k = static_cast<std::size_t>(d.kernel());
    DiscreteNet::Layer layer;
    layer.geometry = g;
    layer.decision = d;
    if (source) {
      const MBConvParams& sp = source->mbconv(i);
      layer.params.expand = copy_prefix(sp.expand, expanded);
      layer.params.expand_scale = copy_prefix(sp.expand_scale, expanded);
      layer.params.expand_bias = copy_prefix(sp.expand_bias, expanded);
      layer.params.dw_scale = copy_prefix(sp.dw_scale, expanded);
      layer.params.project = copy_columns(sp.project, expanded);
      layer.params.project_scale = deep_copy(sp.project_scale);
      layer.dw = crop_kernel(source->superkernel(i).weights(), expanded, k);
    } else {
      layer.params = make_expand(g, expanded, rng);
      layer.dw = fan_in_uniform({expanded, k, k}, k * k, kReluGain, rng);
      make_project(layer.params, g, expanded, rng);
    }
    net.layers_.push_back(std::move(layer));
  }
  if (source) {
    const Head& h = source->head();
    net.head_ = {deep_copy(h.pw), deep_copy(h.scale), deep_copy(h.bias), deep_copy(h.fc_w),
                 deep_copy(h.fc_b)};
  } else {
    net.head_ = make_head(plan, rng);
  }
  return net;
}

std::size_t mbconv_parameter_count(const LayerGeometry& g, const LayerDecision& d) {
  if (d.is_skip()) return 0;
  const auto cin = static_cast<std::size_t>(g.in_channels);
  const auto cout = static_cast<std::size_t>(g.out_channels);
  const auto expanded = cin * static_cast<std::size_t>(d.expansion());
  const auto k = static_cast<std::size_t>(d.kernel());
  return expanded * cin + 2 * expanded + expanded * k * k + expanded + cout * expanded + cout;
}

SearchSpace::SearchSpace(const MacroConfig& cfg) : macro_(cfg) {
  for (const auto& g : plan_network(cfg).layers) {
    options_.push_back(candidate_decisions(g.skip_allowed()));
  }
}

std::optional<std::uint64_t> SearchSpace::size() const {
  std::uint64_t n = 1;
  for (const auto& opts : options_) {
    const std::uint64_t k = opts.size();
    if (n > std::numeric_limits<std::uint64_t>::max() / k) return std::nullopt;
    n *= k;
  }
  return n;
}

double SearchSpace::size_approx() const {
  double n = 1.0;
  for (const auto& opts : options_) n *= static_cast<double>(opts.size());
  return n;
}

DerivedArchitecture SearchSpace::at(std::uint64_t index) const {
  const auto total = size();
  if (!total || index >= *total) throw std::out_of_range("search space index out of range");
  DerivedArchitecture arch{macro_, std::vector<LayerDecision>(options_.size(), LayerDecision::skip())};
  for (std::size_t i = options_.size(); i-- > 0;) {
    const std::uint64_t k = options_[i].size();
    arch.decisions[i] = options_[i][index % k];
    index /= k;
  }
  return arch;
}

DerivedArchitecture SearchSpace::sample(std::mt19937_64& rng) const {
  DerivedArchitecture arch{macro_, {}};
  for (const auto& opts : options_) {
    std::uniform_int_distribution<std::size_t> pick(0, opts.size() - 1);
    arch.decisions.push_back(opts[pick(rng)]);
  }
  return arch;
}

std::uint64_t SearchSpace::index_of(const DerivedArchitecture& arch) const {
  if (arch.decisions.size() != options_.size()) {
    throw std::invalid_argument("architecture length does not match the search space");
  }
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < options_.size(); ++i) {
    const auto& opts = options_[i];
    auto it = std::find(opts.begin(), opts.end(), arch.decisions[i]);
    if (it == opts.end()) {
      throw std::invalid_argument("decision " + arch.decisions[i].to_string() +
                                  " not available at layer " + std::to_string(i));
    }
    index = index * opts.size() + static_cast<std::uint64_t>(it - opts.begin());
  }
  return index;
}

std::vector<DerivedArchitecture> enumerate_space(const MacroConfig& cfg, std::uint64_t cap) {
  SearchSpace space(cfg);
  const auto n = space.size();
  if (!n || *n > cap) {
    throw SpaceTooLarge("search space has " + std::to_string(space.size_approx()) +
                        " architectures, above the enumeration cap of " + std::to_string(cap) +
                        "; sample it instead");
  }
  std::vector<DerivedArchitecture> out;
  out.reserve(*n);
  for (std::uint64_t i = 0; i < *n; ++i) out.push_back(space.at(i));
  return out;
}

}  // namespace spnas
