#pragma once

namespace lbt::schedule {

/// Time-varying base-rate component. Time t is in epochs, fractional allowed.
struct TvConfig {
  double alpha = 1.0;         // additive floor inside the reciprocal
  double lambda = 1e-3;       // soft temperature: steepness of the transition
  double delay_epochs = 10.0; // sigmoid midpoint offset
  double gamma_min = 0.0;     // floor of the annealed rate
  double gamma_target = 1.0;  // multiplies phi(t) to form the base LR

  void validate() const;  // alpha > 0, lambda > 0, gamma_min >= 0, gamma_target > 0
};

/// phi(t) = 1 / (alpha + exp(lambda * (t - delay_epochs))) + gamma_min.
/// Strictly decreasing in t; saturates to gamma_min (t -> inf) and to
/// 1/alpha + gamma_min (t -> -inf) instead of overflowing. Never NaN.
double phi(const TvConfig& cfg, double t);

struct Bounds {
  double lo;
  double hi;
};

/// lo = gamma_min, hi = phi(0) = 1/(alpha + exp(-lambda * delay_epochs)) + gamma_min.
/// phi(t) stays inside [lo, hi] for every t >= 0.
Bounds phi_bounds(const TvConfig& cfg);

/// Linear ramp to gamma_scale over warmup_steps, then cosine decay to gamma_min.
struct WarmupConfig {
  double gamma_scale = 1.0;
  long warmup_steps = 1;  // d_wa, must be < horizon
  long horizon = 2;       // T, total steps
  double gamma_min = 0.0;

  void validate() const;
};

/// t <= warmup_steps: gamma_scale * t / warmup_steps.
/// t  > warmup_steps: gamma_scale * q + gamma_min * (1 - q),
///   q = (1 + cos(pi * (t - warmup_steps) / (horizon - warmup_steps))) / 2.
/// Throws on t < 0 or t > horizon.
double warmup_cosine(const WarmupConfig& cfg, long t);

struct PolyConfig {
  double gamma_start = 1.0;
  double gamma_end = 0.0;
  double power = 2.0;
  long horizon = 1;

  void validate() const;  // gamma_end <= gamma_start, power > 0
};

/// gamma_end + (gamma_start - gamma_end) * (1 - t/horizon)^power.
double poly_decay(const PolyConfig& cfg, long t);

}  // namespace lbt::schedule
