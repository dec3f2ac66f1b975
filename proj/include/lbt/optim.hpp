#pragma once

#include <vector>

#include "lbt/nn.hpp"
#include "lbt/schedule.hpp"
#include "lbt/tensor.hpp"

namespace lbt::optim {

enum class OptimizerKind { kSgd, kLars, kLamb, kTvlars };

struct OptimizerConfig {
  double eta = 0.001;          // trust coefficient
  double weight_decay = 5e-4;  // w_d
  double momentum = 0.9;       // mu, in [0, 1)
  double eps = 1e-9;           // division guard: denominators are clamped to >= eps
  long batch_size = 1;
  long base_batch_size = 1;
  double gamma_tuning = 1.0;
  double beta1 = 0.9;   // LAMB first-moment decay
  double beta2 = 0.999; // LAMB second-moment decay
  bool tvlars_heavy_ball = false;  // replace the extrapolation update with heavy-ball

  /// Linear-rule base LR: gamma_tuning * B / B_base.
  double gamma_scale() const {
    return gamma_tuning * static_cast<double>(batch_size) / static_cast<double>(base_batch_size);
  }

  void validate() const;
};

/// Per-parameter-group optimizer state.
struct GroupState {
  Tensor momentum;    // m_t
  Tensor exp_avg;     // LAMB first moment
  Tensor exp_avg_sq;  // LAMB second moment
  long step = 0;
};

struct GroupReport {
  double layer_lr = 0.0;  // gamma_t^k actually applied
  double lwn = 0.0;       // ||w||
  double lgn = 0.0;       // ||g||
  double lnr = 0.0;       // lwn / (lgn + guard), as computed at step time
  double update_norm = 0.0;
};

struct StepReport {
  std::vector<GroupReport> groups;
};

/// One state per parameter group. TVLARS initializes m0 = w0 so the first
/// extrapolation term vanishes; everything else starts at zero (including
/// TVLARS in heavy-ball mode).
std::vector<GroupState> init_states(const nn::Model& model, OptimizerKind kind,
                                    const OptimizerConfig& cfg = {});

/// base_lr * eta * ||w|| / max(||g|| + weight_decay * ||w||, eps).
/// Returns 0 for an all-zero group (fresh biases must not explode).
double layer_lr_lars(const OptimizerConfig& cfg, double base_lr, const Tensor& w,
                     const Tensor& g);

/// m <- mu * m + g; w <- w - base_lr * m.
StepReport step_sgd_momentum(nn::Model& model, const std::vector<Tensor>& grads,
                             const OptimizerConfig& cfg, std::vector<GroupState>& states,
                             double base_lr);

/// Per group: gamma = layer_lr_lars(...); m <- mu * m + gamma * g; w <- w - m.
StepReport step_lars(nn::Model& model, const std::vector<Tensor>& grads,
                     const OptimizerConfig& cfg, std::vector<GroupState>& states,
                     double base_lr);

/// Per group, with phi = phi(tv, t) and base rate gamma_target * phi:
///   gamma   = gamma_target * phi * eta * ||w|| / max(||g|| + w_d * ||w||, eps)
///   m_{t+1} = w - gamma * g
///   w       = m_{t+1} + mu * (m_{t+1} - m_t)
/// With cfg.tvlars_heavy_ball the last two lines become the step_lars update.
StepReport step_tvlars(nn::Model& model, const std::vector<Tensor>& grads,
                       const OptimizerConfig& cfg, std::vector<GroupState>& states,
                       const schedule::TvConfig& tv, double t_epochs);

/// Adam moments with bias correction, trust ratio ||w|| / ||m_hat/(sqrt(v_hat)+eps)
/// + w_d*w|| clipped to [0, 10], ratio 1 for all-zero w or update.
StepReport step_lamb(nn::Model& model, const std::vector<Tensor>& grads,
                     const OptimizerConfig& cfg, std::vector<GroupState>& states,
                     double base_lr);

/// Dispatch on kind; tv/t_epochs are only read for kTvlars, base_lr otherwise.
StepReport step(OptimizerKind kind, nn::Model& model, const std::vector<Tensor>& grads,
                const OptimizerConfig& cfg, std::vector<GroupState>& states, double base_lr,
                const schedule::TvConfig& tv, double t_epochs);

}  // namespace lbt::optim
