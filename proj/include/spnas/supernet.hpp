#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spnas/superkernel.hpp"
#include "spnas/tensor.hpp"

namespace spnas {

struct BlockSpec {
  int num_layers = 1;    // 1..4
  int out_channels = 16;
  int first_stride = 1;  // 1 or 2; later layers in the block use stride 1

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Fixed macro-architecture: stem, searchable MBConv blocks, head.
struct MacroConfig {
  int stem_channels = 8;
  std::vector<BlockSpec> blocks;
  int head_channels = 64;
  int num_classes = 10;
  double width_multiplier = 1.0;
  int input_resolution = 32;

  void validate() const;
  std::size_t num_searchable_layers() const;

  /// 32x32 inputs, stem 8, blocks (16,24,32) x 2 layers, head 64, 10 classes.
  static MacroConfig desk_default();
  /// Seven blocks, 22 searchable layers at 224x224. Per-block filter counts
  /// are approximate placeholders.
  static MacroConfig full_scale();

  friend bool operator==(const MacroConfig&, const MacroConfig&) = default;
};

/// c * multiplier rounded to the nearest even integer, at least 2.
int scaled_channels(int channels, double width_multiplier);

/// Resolved geometry of one searchable layer.
struct LayerGeometry {
  std::size_t index = 0;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int in_resolution = 0;
  int out_resolution = 0;
  bool residual = false;  // stride 1 and matching channel counts
  bool skip_allowed() const { return residual; }
};

struct NetworkPlan {
  int stem_channels = 0;
  int stem_resolution = 0;
  std::vector<LayerGeometry> layers;
  int head_in_channels = 0;
  int head_channels = 0;
  int head_resolution = 0;
  int num_classes = 0;
  int input_resolution = 0;
};

NetworkPlan plan_network(const MacroConfig& cfg);

/// Per-layer decisions extracted from a supernet, together with its macro.
struct DerivedArchitecture {
  MacroConfig macro;
  std::vector<LayerDecision> decisions;

  /// Throws when the length or a skip position disagrees with the macro.
  void validate() const;
  std::string to_string() const;  // e.g. "5x6,skip,3x3"
  friend bool operator==(const DerivedArchitecture&, const DerivedArchitecture&) = default;
};

enum class ParamKind {
  weight,     // convolution / dense weights; subject to weight decay
  affine,     // per-channel scale and bias
  threshold,  // superkernel decision variables
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamKind kind;
};

/// Stem: 3x3 stride-2 convolution, channel affine, relu6.
struct Stem {
  Tensor conv, scale, bias;
  Tensor forward(Tape& tape, const Tensor& x) const;
};

/// Head: pointwise conv, affine, relu6, global pooling, dense classifier.
struct Head {
  Tensor pw, scale, bias, fc_w, fc_b;
  Tensor forward(Tape& tape, const Tensor& x) const;
};

/// Pointwise stages and per-channel affines of one MBConv layer. The
/// post-depthwise and post-projection affines carry no bias, so a zero
/// depthwise kernel yields an exactly zero residual branch.
struct MBConvParams {
  Tensor expand;        // [eC, C]
  Tensor expand_scale;  // [eC]
  Tensor expand_bias;   // [eC]
  Tensor dw_scale;      // [eC]
  Tensor project;       // [Cout, eC]
  Tensor project_scale; // [Cout]

  Tensor forward(Tape& tape, const Tensor& x, const Tensor& dw_kernel, int stride,
                 bool residual) const;
};

struct SupernetForwardOptions {
  IndicatorConfig indicator;
  std::vector<GateOverride> overrides;  // empty, or one per searchable layer
};

struct SupernetOutput {
  Tensor logits;
  std::vector<LayerGates> gates;
};

/// Single-path supernet: every searchable layer is an MBConv at expansion 6
/// whose depthwise stage is a SuperKernel.
class Supernet {
 public:
  Supernet(MacroConfig cfg, std::mt19937_64& rng);

  const MacroConfig& macro() const { return macro_; }
  const NetworkPlan& plan() const { return plan_; }
  std::size_t num_layers() const { return kernels_.size(); }

  SuperKernel& superkernel(std::size_t i) { return kernels_.at(i); }
  const SuperKernel& superkernel(std::size_t i) const { return kernels_.at(i); }
  const MBConvParams& mbconv(std::size_t i) const { return layers_.at(i); }
  const Stem& stem() const { return stem_; }
  const Head& head() const { return head_; }

  SupernetOutput forward(Tape& tape, const Tensor& x, const SupernetForwardOptions& opts) const;

  /// Stable-ordered parameter list: weights and thresholds in one set.
  std::vector<NamedParam> parameters() const;
  std::size_t num_parameters() const;

  std::vector<DecisionSnapshot> snapshots() const;
  DerivedArchitecture derive() const;

 private:
  MacroConfig macro_;
  NetworkPlan plan_;
  Stem stem_;
  std::vector<MBConvParams> layers_;
  std::vector<SuperKernel> kernels_;
  Head head_;
};

Supernet build_supernet(const MacroConfig& cfg, std::mt19937_64& rng);

struct DiscreteForwardOptions {
  /// Zero the 5x5 shell of every k=5 layer (inference with the inner 3x3 only).
  bool inner_kernels_only = false;
};

/// Plain network of fixed MBConv layers; skipped layers are absent.
class DiscreteNet {
 public:
  struct Layer {
    LayerGeometry geometry;
    LayerDecision decision = LayerDecision::skip();
    MBConvParams params;
    Tensor dw;  // [eC, k, k]
  };

  const DerivedArchitecture& architecture() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const Stem& stem() const { return stem_; }
  const Head& head() const { return head_; }

  Tensor forward(Tape& tape, const Tensor& x, const DiscreteForwardOptions& opts = {}) const;
  std::vector<NamedParam> parameters() const;
  std::size_t num_parameters() const;

 private:
  friend DiscreteNet build_discrete(const DerivedArchitecture&, const Supernet*, std::mt19937_64&);
  DerivedArchitecture arch_;
  Stem stem_;
  std::vector<Layer> layers_;
  Head head_;
};

/// Builds a discrete network. With a source supernet the weights are copied
/// from the matching superkernel subsets; otherwise they are freshly drawn.
DiscreteNet build_discrete(const DerivedArchitecture& arch, const Supernet* source,
                           std::mt19937_64& rng);

/// Parameters of one discrete MBConv layer (0 for skip).
std::size_t mbconv_parameter_count(const LayerGeometry& g, const LayerDecision& d);

/// Per-layer candidate set of a macro config.
class SearchSpace {
 public:
  explicit SearchSpace(const MacroConfig& cfg);

  std::size_t num_layers() const { return options_.size(); }
  const std::vector<LayerDecision>& options(std::size_t layer) const { return options_.at(layer); }

  /// Closed-form product of per-layer option counts; nullopt on 64-bit overflow.
  std::optional<std::uint64_t> size() const;
  /// Same count as a floating value (never overflows for realistic depths).
  double size_approx() const;

  /// Mixed-radix decode; layer 0 is the most significant digit.
  DerivedArchitecture at(std::uint64_t index) const;
  /// Uniform draw over each layer's options.
  DerivedArchitecture sample(std::mt19937_64& rng) const;
  /// Index of an architecture in this space; throws if not representable.
  std::uint64_t index_of(const DerivedArchitecture& arch) const;

 private:
  MacroConfig macro_;
  std::vector<std::vector<LayerDecision>> options_;
};

/// Raised when a space is too large to enumerate.
class SpaceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every architecture of the space, in index order. Throws SpaceTooLarge
/// when the count exceeds `cap`.
std::vector<DerivedArchitecture> enumerate_space(const MacroConfig& cfg, std::uint64_t cap);

}  // namespace spnas
