#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lbt/rng.hpp"
#include "lbt/schedule.hpp"

using lbt::Rng;
using namespace lbt::schedule;

namespace {

TvConfig random_tv(Rng& rng) {
  TvConfig cfg;
  cfg.alpha = rng.uniform(0.1, 5.0);
  cfg.lambda = std::pow(10.0, rng.uniform(-6.0, 0.0));
  cfg.delay_epochs = rng.uniform(0.0, 50.0);
  cfg.gamma_min = rng.uniform(0.0, 0.5);
  cfg.gamma_target = rng.uniform(0.1, 20.0);
  return cfg;
}

}  // namespace

TEST_CASE("phi at the sigmoid midpoint") {
  // psi = 0 at t = delay, so the value is 1/(alpha + 1) + gamma_min.
  for (double lambda : {1e-4, 0.37, 2.0}) {
    TvConfig cfg{1.0, lambda, 7.5, 0.0, 1.0};
    CHECK(phi(cfg, 7.5) == doctest::Approx(0.5).epsilon(1e-15));
  }
  TvConfig shifted{3.0, 0.5, 2.0, 0.25, 1.0};
  CHECK(phi(shifted, 2.0) == doctest::Approx(0.25 + 0.25).epsilon(1e-15));
}

TEST_CASE("phi approaches gamma_min for large t") {
  TvConfig cfg{1.0, 0.1, 10.0, 0.125, 1.0};
  CHECK(phi(cfg, 1e6) == doctest::Approx(0.125).epsilon(1e-15));
  // lambda*(t - delay) >= 50 already puts the residual below 1e-12.
  CHECK(std::abs(phi(cfg, 10.0 + 50.0 / 0.1) - cfg.gamma_min) <= 1e-12);
}

TEST_CASE("phi frozen value") {
  // 1/(1 + exp(-0.01)) evaluated with 30-digit arithmetic.
  TvConfig cfg{1.0, 0.001, 10.0, 0.0, 1.0};
  CHECK(phi(cfg, 0.0) == doctest::Approx(0.502499979166874997891886436071).epsilon(1e-12));
}

TEST_CASE("phi saturates instead of overflowing") {
  TvConfig cfg{1.0, 10.0, 0.0, 0.25, 1.0};
  CHECK(phi(cfg, 1e308) == 0.25);
  CHECK(phi(cfg, -1e308) == doctest::Approx(1.0 / cfg.alpha + 0.25).epsilon(1e-15));
  CHECK(std::isfinite(phi(cfg, 1e18)));
  CHECK(std::isfinite(phi(cfg, -1e18)));
}

TEST_CASE("phi_bounds frozen value and trivial floor") {
  TvConfig cfg{1.0, 0.01, 10.0, 0.0, 1.0};
  // 1/(1 + exp(-0.1)) evaluated with 30-digit arithmetic.
  CHECK(phi_bounds(cfg).hi == doctest::Approx(0.524979187478939986099193182604).epsilon(1e-12));
  CHECK(phi_bounds(cfg).lo == 0.0);

  TvConfig floored{0.7, 0.2, 3.0, 0.3, 1.0};
  CHECK(phi_bounds(floored).lo == 0.3);
}

TEST_CASE("phi containment over sampled times") {
  Rng rng(12345);
  for (int trial = 0; trial < 50; ++trial) {
    const TvConfig cfg = random_tv(rng);
    const Bounds b = phi_bounds(cfg);
    const double t_max = 10.0 * std::max(cfg.delay_epochs, 1.0);
    for (int i = 0; i < 10000; ++i) {
      const double t = rng.uniform(0.0, t_max);
      const double v = phi(cfg, t);
      REQUIRE(v >= b.lo);
      REQUIRE(v <= b.hi);
    }
    // The endpoint attains the upper bound exactly.
    CHECK(phi(cfg, 0.0) == b.hi);
  }
}

TEST_CASE("phi is nonincreasing") {
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    const TvConfig cfg = random_tv(rng);
    for (int i = 0; i < 100; ++i) {
      double t1 = rng.uniform(0.0, 100.0);
      double t2 = rng.uniform(0.0, 100.0);
      if (t1 > t2) std::swap(t1, t2);
      REQUIRE(phi(cfg, t1) >= phi(cfg, t2));
    }
  }
}

TEST_CASE("larger lambda steepens the transition") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    TvConfig lo = random_tv(rng);
    TvConfig hi = lo;
    hi.lambda = lo.lambda * rng.uniform(1.5, 100.0);
    const double before = rng.uniform(0.0, lo.delay_epochs);
    const double after = lo.delay_epochs + rng.uniform(0.01, 50.0);
    CHECK(phi(hi, before) >= phi(lo, before));
    CHECK(phi(hi, after) <= phi(lo, after));
  }
}

TEST_CASE("tv config validation") {
  CHECK_THROWS_AS((TvConfig{0.0, 1.0, 1.0, 0.0, 1.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((TvConfig{1.0, 0.0, 1.0, 0.0, 1.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((TvConfig{1.0, 1.0, 1.0, -0.1, 1.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((TvConfig{1.0, 1.0, 1.0, 0.0, 0.0}.validate()), std::invalid_argument);
  CHECK_NOTHROW((TvConfig{1.0, 1e-3, 10.0, 0.0, 1.0}.validate()));
}

TEST_CASE("warmup ramp endpoints") {
  WarmupConfig cfg{2.5, 10, 100, 0.01};
  CHECK(warmup_cosine(cfg, 0) == 0.0);
  CHECK(warmup_cosine(cfg, 10) == 2.5);
  CHECK(warmup_cosine(cfg, 5) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("warmup decay midpoint and end") {
  // Midpoint of the decay phase has q = 1/2, value (gamma_scale + gamma_min)/2.
  WarmupConfig cfg{1.0, 10, 110, 0.0};
  CHECK(warmup_cosine(cfg, 60) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(warmup_cosine(cfg, 110) == doctest::Approx(0.0).epsilon(1e-12));

  WarmupConfig floored{1.0, 10, 110, 0.2};
  CHECK(warmup_cosine(floored, 110) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("warmup branches agree at the boundary") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    WarmupConfig cfg;
    cfg.gamma_scale = rng.uniform(0.1, 10.0);
    cfg.warmup_steps = 1 + static_cast<long>(rng.index(50));
    cfg.horizon = cfg.warmup_steps + 2 + static_cast<long>(rng.index(500));
    cfg.gamma_min = rng.uniform(0.0, 0.1);
    // The decay branch evaluated at its start (q = 1) equals the ramp end.
    const double q = 0.5 * (1.0 + std::cos(0.0));
    const double decay_at_start = cfg.gamma_scale * q + cfg.gamma_min * (1.0 - q);
    CHECK(warmup_cosine(cfg, cfg.warmup_steps) == doctest::Approx(decay_at_start).epsilon(1e-15));
  }
}

TEST_CASE("warmup rejects out-of-range steps") {
  WarmupConfig cfg{1.0, 5, 20, 0.0};
  CHECK_THROWS_AS(warmup_cosine(cfg, -1), std::invalid_argument);
  CHECK_THROWS_AS(warmup_cosine(cfg, 21), std::invalid_argument);
  CHECK_THROWS_AS((WarmupConfig{1.0, 20, 20, 0.0}).validate(), std::invalid_argument);
}

TEST_CASE("poly decay endpoints and midpoint") {
  PolyConfig cfg{1.0, 0.0, 2.0, 100};
  CHECK(poly_decay(cfg, 0) == 1.0);
  CHECK(poly_decay(cfg, 100) == 0.0);
  CHECK(poly_decay(cfg, 50) == doctest::Approx(0.25).epsilon(1e-15));

  PolyConfig shifted{2.0, 0.5, 1.0, 10};
  CHECK(poly_decay(shifted, 0) == 2.0);
  CHECK(poly_decay(shifted, 10) == 0.5);
  CHECK_THROWS_AS(poly_decay(shifted, 11), std::invalid_argument);
  CHECK_THROWS_AS((PolyConfig{1.0, 2.0, 1.0, 10}).validate(), std::invalid_argument);
}
