#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "lbt/tensor.hpp"

namespace lbt::nn {

enum class Activation { kReLU, kIdentity };
enum class LossKind { kSoftmaxCrossEntropy, kMse };

enum class InitKind { kXavierUniform, kXavierNormal, kKaimingUniform, kKaimingNormal };

struct InitScheme {
  InitKind kind = InitKind::kKaimingUniform;
  std::uint64_t seed = 0;
};

/// weights is [fan_out x fan_in], bias is [fan_out]. Weights and bias are
/// distinct parameter groups: group index 2*layer for weights, 2*layer+1 for bias.
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::kReLU;

  std::size_t fan_in() const { return weights.dim(1); }
  std::size_t fan_out() const { return weights.dim(0); }
};

struct Model {
  std::vector<DenseLayer> layers;
  LossKind loss_kind = LossKind::kSoftmaxCrossEntropy;
  double l2_coeff = 0.0;

  std::size_t input_dim() const { return layers.front().fan_in(); }
  std::size_t output_dim() const { return layers.back().fan_out(); }
  std::size_t group_count() const { return 2 * layers.size(); }

  /// Parameter groups in fixed order: w0, b0, w1, b1, ...
  std::vector<Tensor*> param_groups();
  std::vector<const Tensor*> param_groups() const;

  /// Adjacent layer dims must be compatible; throws otherwise.
  void validate() const;
};

/// Integer class labels for cross-entropy, a [B x d_out] tensor for MSE.
using Targets = std::variant<std::vector<int>, Tensor>;

struct Batch {
  Tensor inputs;  // [B x d_in]
  Targets targets;

  std::size_t size() const { return inputs.dim(0); }
};

/// Everything backward needs: acts[0] is the input batch, acts[l+1] the output
/// of layer l; pre_acts[l] the affine output of layer l before activation.
struct ForwardCache {
  std::vector<Tensor> pre_acts;
  std::vector<Tensor> acts;
  std::size_t batch_size = 0;
};

/// Builds an MLP over layer_dims (>= 2 entries). Hidden layers ReLU, output
/// layer Identity. Weights per scheme, biases zero, deterministic under seed.
Model init_model(const std::vector<std::size_t>& layer_dims, const InitScheme& scheme,
                 LossKind loss_kind, double l2_coeff);

/// Mean per-example loss plus (l2_coeff/2) * sum of squared group norms.
/// Fills `cache` when non-null. Throws DivergenceError on non-finite values.
double forward(const Model& model, const Batch& batch, ForwardCache* cache = nullptr);

/// One gradient tensor per parameter group (same order as param_groups()),
/// each the mean minibatch gradient including the L2 term's l2_coeff * w.
std::vector<Tensor> backward(const Model& model, const ForwardCache& cache, const Batch& batch);

/// Central differences: (loss(w + h e_j) - loss(w - h e_j)) / 2h per coordinate.
/// Loss-only oracle for backward; shares no backprop code with it.
std::vector<Tensor> finite_diff_grad(const Model& model, const Batch& batch, double h = 1e-5);

}  // namespace lbt::nn
