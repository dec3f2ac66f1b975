#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbt/nn.hpp"
#include "lbt/tensor.hpp"

namespace lbt::data {

struct Dataset {
  Tensor inputs;  // [N x d]
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.dim(1); }
  void validate() const;
};

/// Gaussian clusters, one per class, means unit-separated on a scaled simplex,
/// then z-scored per dimension (constant dimensions are left centered).
/// spread is the per-dimension std before normalization.
Dataset synth_blobs(int n_per_class, int classes, int dim, double spread, std::uint64_t seed);

/// Deterministic subset/split helpers used by the harness.
Dataset take(const Dataset& ds, std::span<const std::size_t> indices);

// --- CIFAR-10 binary format: 3073-byte records, label then 3x1024 planes ---

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 1;

struct Cifar10Record {
  std::uint8_t label = 0;
  std::array<std::uint8_t, kCifarPixels> pixels{};
};

/// Throws DataFormatError naming the byte offset where input ended on a
/// truncated file, or the record index on a label byte > 9.
std::vector<Cifar10Record> parse_cifar10_bin(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_cifar10(std::span<const Cifar10Record> records);

std::vector<Cifar10Record> load_cifar10_file(const std::string& path);

/// Pixels scaled to [0, 1]; no per-channel statistics.
Dataset cifar10_to_dataset(std::span<const Cifar10Record> records);

/// One epoch of minibatches over a (possibly shuffled) index permutation.
/// Cross-entropy targets (integer labels). Deterministic under seed.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, long batch_size, std::uint64_t seed, bool shuffle,
              bool drop_last);

  std::optional<nn::Batch> next();
  long batches_per_epoch() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset& dataset_;
  long batch_size_;
  bool drop_last_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Requires B >= 1, and B <= N when drop_last.
BatchStream batch_iterator(const Dataset& dataset, long batch_size, std::uint64_t seed,
                           bool shuffle, bool drop_last);

}  // namespace lbt::data
