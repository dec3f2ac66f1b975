#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "lbt/data.hpp"
#include "lbt/nn.hpp"
#include "lbt/tensor.hpp"

namespace lbt::diag {

/// Guard added to the gradient norm when forming LNR. Published constant,
/// distinct from the optimizer's division guard.
inline constexpr double kLnrEps = 1e-12;

/// A record is flagged when lgn < kExplosionRatio * lwn: the near-zero
/// gradient-norm regime where the scaled ratio blows up.
inline constexpr double kExplosionRatio = 1e-6;

struct NormRecord {
  long step = 0;
  double epoch = 0.0;
  int group_index = 0;
  double lwn = 0.0;  // ||w||
  double lgn = 0.0;  // ||grad||
  double lnr = 0.0;  // lwn / (lgn + kLnrEps)
  double loss = 0.0;
  bool exploded = false;
};

/// One record per parameter group, ordered by group index. Never NaN.
std::vector<NormRecord> record_norms(const nn::Model& model, const std::vector<Tensor>& grads,
                                     long step, double epoch, double loss);

/// One JSON object per line.
void write_norms_jsonl(std::ostream& out, std::span<const NormRecord> records);
std::vector<NormRecord> read_norms_jsonl(std::istream& in);

/// Mean of per-example gradients over the whole dataset (chunked internally).
std::vector<Tensor> general_gradient(const nn::Model& model, const data::Dataset& dataset);

struct VarianceEstimate {
  long batch_size = 0;
  double mean_dev = 0.0;  // Monte-Carlo mean of ||g_full - g_B|| over trials
  int trials = 0;
  std::uint64_t seed = 0;
};

/// Mean over `trials` of the whole-model L2 deviation between the full-dataset
/// gradient and a size-B batch gradient, parameters held fixed. Batches are
/// sampled without replacement; trial i uses seed + i.
VarianceEstimate batch_gradient_variance(const nn::Model& model, const data::Dataset& dataset,
                                         long batch_size, int trials, std::uint64_t seed);

void write_variance_csv(std::ostream& out, std::span<const VarianceEstimate> estimates);

/// OLS slope of log(value) against log(B). Needs >= 3 strictly positive points.
double fit_loglog_slope(std::span<const std::pair<double, double>> points);

}  // namespace lbt::diag
