#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spnas/tensor.hpp"

namespace spnas {

/// Raised on malformed input files; the message carries the offset or line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// In-memory image set, pixels in [0,1], layout [N,3,R,R].
struct Dataset {
  int num_classes = 10;
  std::size_t resolution = 32;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t example_size() const { return 3 * resolution * resolution; }
  /// Throws when labels or pixel count disagree with the declared shape.
  void validate() const;
};

/// Concatenates CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record).
Dataset load_cifar10_binary(const std::vector<std::string>& paths);
Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes, const std::string& name = "");

enum class Split { train, eval };

struct SynthSpec {
  int classes = 10;
  std::size_t n = 512;
  std::size_t resolution = 32;
  std::uint64_t seed = 0;
  /// Peak per-pixel class signal, in units of the per-pixel noise std-dev.
  double separation = 4.0;
  int blobs_per_class = 3;
  Split split = Split::train;
};

/// Class-conditional Gaussian-blob images. Class prototypes depend only on the
/// seed; the split selects an independent noise stream. Labels cycle 0..classes-1.
Dataset synth_dataset(const SynthSpec& spec);

struct Augment {
  bool flip = false;
  int crop_pad = 0;  // random crop after zero padding by this many pixels
  friend bool operator==(const Augment&, const Augment&) = default;
};

/// Gathers examples into an [n,3,R,R] tensor, applying augmentation when enabled.
Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices,
                  const Augment& aug = {}, std::mt19937_64* rng = nullptr);
std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

/// Shuffled example order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng);

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

}  // namespace spnas
