#include "spnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace spnas {
namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;
constexpr double kPixelNoise = 0.1;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

}  // namespace

void Dataset::validate() const {
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (resolution == 0) throw std::invalid_argument("dataset resolution must be positive");
  if (pixels.size() != labels.size() * example_size()) {
    throw std::invalid_argument("dataset pixel count does not match " +
                                std::to_string(labels.size()) + " examples of 3x" +
                                std::to_string(resolution) + "x" + std::to_string(resolution));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("example " + std::to_string(i) + " has label " +
                                  std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes, const std::string& name) {
  const std::string where = name.empty() ? "" : name + ": ";
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t offset = bytes.size() / kCifarRecord * kCifarRecord;
    throw FormatError(where + "truncated record at byte offset " + std::to_string(offset) +
                      " (file length " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073)");
  }
  Dataset d;
  d.num_classes = 10;
  d.resolution = 32;
  const std::size_t n = bytes.size() / kCifarRecord;
  d.labels.reserve(n);
  d.pixels.reserve(n * kCifarPixels);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError(where + "record " + std::to_string(r) + " has label " +
                        std::to_string(rec[0]) + " (expected 0..9)");
    }
    d.labels.push_back(rec[0]);
    for (std::size_t i = 1; i < kCifarRecord; ++i) d.pixels.push_back(rec[i] / 255.0);
  }
  return d;
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("no CIFAR-10 files given");
  Dataset all;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    Dataset part = parse_cifar10_binary(bytes, path);
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  return all;
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (spec.n < static_cast<std::size_t>(spec.classes)) {
    throw std::invalid_argument("synthetic data needs n >= classes");
  }
  if (spec.resolution == 0) throw std::invalid_argument("resolution must be positive");
  if (spec.blobs_per_class < 1) throw std::invalid_argument("blobs_per_class must be positive");
  const std::size_t r = spec.resolution;
  const std::size_t plane = r * r;
  const std::size_t ex = 3 * plane;

  std::mt19937_64 proto_rng = stream(spec.seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> protos(spec.classes, std::vector<double>(ex, 0.0));
  for (auto& p : protos) {
    for (int b = 0; b < spec.blobs_per_class; ++b) {
      const double cy = unit(proto_rng) * static_cast<double>(r);
      const double cx = unit(proto_rng) * static_cast<double>(r);
      const double sigma = static_cast<double>(r) * (0.125 + 0.125 * unit(proto_rng));
      double amp[3];
      for (double& a : amp) a = 2.0 * unit(proto_rng) - 1.0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < r; ++y)
          for (std::size_t x = 0; x < r; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double dx = static_cast<double>(x) + 0.5 - cx;
            p[c * plane + y * r + x] += amp[c] * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
          }
    }
    double peak = 0.0;
    for (double v : p) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
      for (double& v : p) v /= peak;
  }

  std::mt19937_64 noise_rng = stream(spec.seed, spec.split == Split::train ? 1 : 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.num_classes = spec.classes;
  d.resolution = r;
  d.labels.resize(spec.n);
  d.pixels.resize(spec.n * ex);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    d.labels[i] = label;
    const auto& p = protos[label];
    double* out = d.pixels.data() + i * ex;
    for (std::size_t j = 0; j < ex; ++j) {
      const double v = 0.5 + kPixelNoise * (spec.separation * p[j] + normal(noise_rng));
      out[j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return d;
}

Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices, const Augment& aug,
                  std::mt19937_64* rng) {
  const std::size_t r = data.resolution;
  const std::size_t ex = data.example_size();
  const bool augment = aug.flip || aug.crop_pad > 0;
  if (augment && !rng) throw std::invalid_argument("augmentation needs a random generator");
  Tensor x({indices.size(), 3, r, r});
  auto out = x.mutable_data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= data.size()) throw std::out_of_range("batch index out of range");
    const double* src = data.pixels.data() + indices[b] * ex;
    double* dst = out.data() + b * ex;
    if (!augment) {
      std::copy(src, src + ex, dst);
      continue;
    }
    bool flip = false;
    long dy = 0, dx = 0;
    if (aug.flip) flip = std::bernoulli_distribution(0.5)(*rng);
    if (aug.crop_pad > 0) {
      std::uniform_int_distribution<long> shift(-aug.crop_pad, aug.crop_pad);
      dy = shift(*rng);
      dx = shift(*rng);
    }
    const long ri = static_cast<long>(r);
    for (std::size_t c = 0; c < 3; ++c)
      for (long y = 0; y < ri; ++y)
        for (long xx = 0; xx < ri; ++xx) {
          const long sy = y + dy;
          long sx = xx + dx;
          if (flip) sx = ri - 1 - sx;
          const bool inside = sy >= 0 && sy < ri && sx >= 0 && sx < ri;
          dst[(c * r + y) * r + xx] = inside ? src[(c * r + sy) * r + sx] : 0.0;
        }
  }
  return x;
}

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels.at(i));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  return (n + batch_size - 1) / batch_size;
}

}  // namespace spnas
