#include "lbt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lbt/diagnostics.hpp"
#include "lbt/error.hpp"

namespace lbt::optim {

namespace {

struct GroupView {
  Tensor* param;
  const Tensor* grad;
  GroupState* state;
  int index;
};

std::vector<GroupView> checked_groups(nn::Model& model, const std::vector<Tensor>& grads,
                                      std::vector<GroupState>& states) {
  std::vector<Tensor*> params = model.param_groups();
  if (grads.size() != params.size() || states.size() != params.size()) {
    throw std::invalid_argument("optimizer: grads/states count does not match parameter groups");
  }
  std::vector<GroupView> views;
  views.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].same_shape(*params[k])) {
      throw std::invalid_argument("optimizer: gradient shape mismatch at group " +
                                  std::to_string(k));
    }
    if (states[k].momentum.numel() != params[k]->numel()) {
      throw std::invalid_argument("optimizer: state shape mismatch at group " +
                                  std::to_string(k));
    }
    if (!grads[k].all_finite()) {
      throw DivergenceError("non-finite gradient in group " + std::to_string(k),
                            static_cast<int>(k));
    }
    views.push_back({params[k], &grads[k], &states[k], static_cast<int>(k)});
  }
  return views;
}

GroupReport make_report(double layer_lr, double lwn, double lgn, double update_norm) {
  GroupReport r;
  r.layer_lr = layer_lr;
  r.lwn = lwn;
  r.lgn = lgn;
  r.lnr = lwn / (lgn + diag::kLnrEps);
  r.update_norm = update_norm;
  return r;
}

void require_finite_param(const GroupView& g) {
  if (!g.param->all_finite()) {
    throw DivergenceError("non-finite update in group " + std::to_string(g.index), g.index);
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("optimizer: eta must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("optimizer: momentum must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be > 0");
  if (batch_size < 1) throw std::invalid_argument("optimizer: batch_size must be >= 1");
  if (base_batch_size < 1) throw std::invalid_argument("optimizer: base_batch_size must be >= 1");
  if (!(gamma_tuning > 0.0)) throw std::invalid_argument("optimizer: gamma_tuning must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("optimizer: betas must be in [0, 1)");
  }
}

std::vector<GroupState> init_states(const nn::Model& model, OptimizerKind kind,
                                    const OptimizerConfig& cfg) {
  const bool track_weights = kind == OptimizerKind::kTvlars && !cfg.tvlars_heavy_ball;
  std::vector<GroupState> states;
  for (const Tensor* group : model.param_groups()) {
    GroupState s;
    // Extrapolation-style TVLARS momentum starts at the weights themselves:
    // the first m1 - m0 is then purely the first scaled step.
    s.momentum = track_weights ? *group : Tensor::zeros(group->shape);
    if (kind == OptimizerKind::kLamb) {
      s.exp_avg = Tensor::zeros(group->shape);
      s.exp_avg_sq = Tensor::zeros(group->shape);
    }
    states.push_back(std::move(s));
  }
  return states;
}

double layer_lr_lars(const OptimizerConfig& cfg, double base_lr, const Tensor& w,
                     const Tensor& g) {
  if (!w.same_shape(g)) throw std::invalid_argument("layer_lr_lars: shape mismatch");
  if (base_lr < 0.0) throw std::invalid_argument("layer_lr_lars: base_lr must be >= 0");
  const double wn = w.l2_norm();
  if (wn == 0.0) return 0.0;
  const double denom = std::max(g.l2_norm() + cfg.weight_decay * wn, cfg.eps);
  return base_lr * cfg.eta * wn / denom;
}

StepReport step_sgd_momentum(nn::Model& model, const std::vector<Tensor>& grads,
                             const OptimizerConfig& cfg, std::vector<GroupState>& states,
                             double base_lr) {
  cfg.validate();
  StepReport report;
  for (GroupView& g : checked_groups(model, grads, states)) {
    Tensor& m = g.state->momentum;
    double update_sq = 0.0;
    for (std::size_t i = 0; i < g.param->numel(); ++i) {
      m[i] = cfg.momentum * m[i] + (*g.grad)[i];
      const double delta = base_lr * m[i];
      (*g.param)[i] -= delta;
      update_sq += delta * delta;
    }
    g.state->step += 1;
    require_finite_param(g);
    report.groups.push_back(
        make_report(base_lr, g.param->l2_norm(), g.grad->l2_norm(), std::sqrt(update_sq)));
  }
  return report;
}

StepReport step_lars(nn::Model& model, const std::vector<Tensor>& grads,
                     const OptimizerConfig& cfg, std::vector<GroupState>& states,
                     double base_lr) {
  cfg.validate();
  StepReport report;
  for (GroupView& g : checked_groups(model, grads, states)) {
    const double lwn = g.param->l2_norm();
    const double lgn = g.grad->l2_norm();
    const double gamma = layer_lr_lars(cfg, base_lr, *g.param, *g.grad);
    Tensor& m = g.state->momentum;
    double update_sq = 0.0;
    for (std::size_t i = 0; i < g.param->numel(); ++i) {
      m[i] = cfg.momentum * m[i] + gamma * (*g.grad)[i];
      (*g.param)[i] -= m[i];
      update_sq += m[i] * m[i];
    }
    g.state->step += 1;
    require_finite_param(g);
    report.groups.push_back(make_report(gamma, lwn, lgn, std::sqrt(update_sq)));
  }
  return report;
}

StepReport step_tvlars(nn::Model& model, const std::vector<Tensor>& grads,
                       const OptimizerConfig& cfg, std::vector<GroupState>& states,
                       const schedule::TvConfig& tv, double t_epochs) {
  cfg.validate();
  tv.validate();
  const double base_lr = tv.gamma_target * schedule::phi(tv, t_epochs);

  if (cfg.tvlars_heavy_ball) {
    return step_lars(model, grads, cfg, states, base_lr);
  }

  StepReport report;
  for (GroupView& g : checked_groups(model, grads, states)) {
    const double lwn = g.param->l2_norm();
    const double lgn = g.grad->l2_norm();
    const double gamma = layer_lr_lars(cfg, base_lr, *g.param, *g.grad);
    Tensor& m_prev = g.state->momentum;
    double update_sq = 0.0;
    for (std::size_t i = 0; i < g.param->numel(); ++i) {
      const double w_old = (*g.param)[i];
      const double m_next = w_old - gamma * (*g.grad)[i];
      const double w_new = m_next + cfg.momentum * (m_next - m_prev[i]);
      m_prev[i] = m_next;
      const double delta = w_new - w_old;
      update_sq += delta * delta;
      (*g.param)[i] = w_new;
    }
    g.state->step += 1;
    require_finite_param(g);
    report.groups.push_back(make_report(gamma, lwn, lgn, std::sqrt(update_sq)));
  }
  return report;
}

StepReport step_lamb(nn::Model& model, const std::vector<Tensor>& grads,
                     const OptimizerConfig& cfg, std::vector<GroupState>& states,
                     double base_lr) {
  cfg.validate();
  constexpr double kTrustClip = 10.0;
  StepReport report;
  for (GroupView& g : checked_groups(model, grads, states)) {
    if (g.state->exp_avg.numel() != g.param->numel()) {
      throw std::invalid_argument("step_lamb: states were not initialized for LAMB");
    }
    g.state->step += 1;
    const double t = static_cast<double>(g.state->step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    const double lwn = g.param->l2_norm();
    const double lgn = g.grad->l2_norm();
    Tensor& m = g.state->exp_avg;
    Tensor& v = g.state->exp_avg_sq;
    Tensor update = Tensor::zeros(g.param->shape);
    for (std::size_t i = 0; i < g.param->numel(); ++i) {
      const double gi = (*g.grad)[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      update[i] = m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * (*g.param)[i];
    }
    const double un = update.l2_norm();
    double trust = 1.0;
    if (lwn > 0.0 && un > 0.0) {
      trust = std::clamp(lwn / un, 0.0, kTrustClip);
    }
    const double scale = base_lr * trust;
    for (std::size_t i = 0; i < g.param->numel(); ++i) {
      (*g.param)[i] -= scale * update[i];
    }
    require_finite_param(g);
    report.groups.push_back(make_report(scale, lwn, lgn, scale * un));
  }
  return report;
}

StepReport step(OptimizerKind kind, nn::Model& model, const std::vector<Tensor>& grads,
                const OptimizerConfig& cfg, std::vector<GroupState>& states, double base_lr,
                const schedule::TvConfig& tv, double t_epochs) {
  switch (kind) {
    case OptimizerKind::kSgd:
      return step_sgd_momentum(model, grads, cfg, states, base_lr);
    case OptimizerKind::kLars:
      return step_lars(model, grads, cfg, states, base_lr);
    case OptimizerKind::kLamb:
      return step_lamb(model, grads, cfg, states, base_lr);
    case OptimizerKind::kTvlars:
      return step_tvlars(model, grads, cfg, states, tv, t_epochs);
  }
  throw std::invalid_argument("unknown optimizer kind");
}

}  // namespace lbt::optim
