#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lbt {

/// Deterministic sampler. mt19937_64 output is standardized; the uniform and
/// normal transforms are implemented here rather than via std:: distributions,
/// whose sequences differ between standard libraries. Same seed, same stream,
/// everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Marsaglia polar; one spare kept across calls.
  double normal();

  /// Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates with the deterministic sampler above.
void shuffle_indices(std::vector<std::size_t>& indices, Rng& rng);

std::vector<std::size_t> identity_permutation(std::size_t n);

/// splitmix64 step; used to derive independent sub-streams from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace lbt
