#include "lbt/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lbt::schedule {

void TvConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("tv schedule: alpha must be > 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("tv schedule: lambda must be > 0");
  if (delay_epochs < 0.0) throw std::invalid_argument("tv schedule: delay_epochs must be >= 0");
  if (gamma_min < 0.0) throw std::invalid_argument("tv schedule: gamma_min must be >= 0");
  if (!(gamma_target > 0.0)) throw std::invalid_argument("tv schedule: gamma_target must be > 0");
}

double phi(const TvConfig& cfg, double t) {
  const double psi = cfg.lambda * (t - cfg.delay_epochs);
  // exp saturates through IEEE semantics: exp(+big) = inf gives 1/inf = 0,
  // exp(-big) = 0 gives 1/alpha. Clamp anyway so no FP exception flags fire.
  if (psi > 709.0) return cfg.gamma_min;
  const double e = std::exp(psi);
  return 1.0 / (cfg.alpha + e) + cfg.gamma_min;
}

Bounds phi_bounds(const TvConfig& cfg) {
  // The maximum over t >= 0 sits at t = 0; computed with the same expression
  // shape as phi() so containment holds bit-exactly at the endpoint.
  const double hi = 1.0 / (cfg.alpha + std::exp(cfg.lambda * (0.0 - cfg.delay_epochs))) +
                    cfg.gamma_min;
  return Bounds{cfg.gamma_min, hi};
}

void WarmupConfig::validate() const {
  if (!(gamma_scale > 0.0)) throw std::invalid_argument("warmup schedule: gamma_scale must be > 0");
  if (warmup_steps < 1) throw std::invalid_argument("warmup schedule: warmup_steps must be >= 1");
  if (warmup_steps >= horizon) {
    throw std::invalid_argument("warmup schedule: warmup_steps must be < horizon");
  }
  if (gamma_min < 0.0) throw std::invalid_argument("warmup schedule: gamma_min must be >= 0");
}

double warmup_cosine(const WarmupConfig& cfg, long t) {
  if (t < 0 || t > cfg.horizon) {
    throw std::invalid_argument("warmup schedule: t out of range [0, horizon], got " +
                                std::to_string(t));
  }
  if (t <= cfg.warmup_steps) {
    return cfg.gamma_scale * static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(t - cfg.warmup_steps) /
                          static_cast<double>(cfg.horizon - cfg.warmup_steps);
  const double q = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.gamma_scale * q + cfg.gamma_min * (1.0 - q);
}

void PolyConfig::validate() const {
  if (!(gamma_start > 0.0)) throw std::invalid_argument("poly schedule: gamma_start must be > 0");
  if (gamma_end < 0.0) throw std::invalid_argument("poly schedule: gamma_end must be >= 0");
  if (gamma_end > gamma_start) {
    throw std::invalid_argument("poly schedule: gamma_end must be <= gamma_start");
  }
  if (!(power > 0.0)) throw std::invalid_argument("poly schedule: power must be > 0");
  if (horizon < 1) throw std::invalid_argument("poly schedule: horizon must be >= 1");
}

double poly_decay(const PolyConfig& cfg, long t) {
  if (t < 0 || t > cfg.horizon) {
    throw std::invalid_argument("poly schedule: t out of range [0, horizon], got " +
                                std::to_string(t));
  }
  const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(cfg.horizon);
  return cfg.gamma_end + (cfg.gamma_start - cfg.gamma_end) * std::pow(frac, cfg.power);
}

}  // namespace lbt::schedule
