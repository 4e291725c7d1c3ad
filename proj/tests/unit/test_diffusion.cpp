#include "doctest.h"

#include <cmath>

#include "sudo/data.hpp"
#include "sudo/diffusion.hpp"
#include "sudo/error.hpp"
#include "sudo/training.hpp"

using namespace sudo;

TEST_SUITE("diffusion") {

TEST_CASE("linear schedule endpoints") {
  const Schedule s = make_linear_schedule(2, 0.1, 0.3);
  REQUIRE(s.steps() == 2);
  CHECK(s.beta(1) == 0.1);
  CHECK(s.beta(2) == 0.3);
  const Schedule one = make_linear_schedule(1, 0.2, 0.2);
  CHECK(one.beta(1) == 0.2);
  CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.5), ConfigError);
}

TEST_CASE("cumulative products") {
  const Schedule s = Schedule::from_betas({0.1, 0.2, 0.3});
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.alpha_bar(3) == doctest::Approx(0.504).epsilon(1e-15));

  const Schedule tiny = Schedule::from_betas({1e-300, 1e-300});
  CHECK(tiny.alpha_bar(2) == 1.0);
}

TEST_CASE("default schedule invariants") {
  const Schedule s = make_linear_schedule();
  CHECK(s.steps() == 200);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(200) == doctest::Approx(0.02).epsilon(1e-14));
  for (std::size_t t = 1; t <= s.steps(); ++t) {
    CHECK(s.alpha_bar(t) <= s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0.0);
    CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t));
  }
  CHECK(s.posterior_variance(1) == 0.0);
  CHECK(s.posterior_variance(2) > 0.0);
}

TEST_CASE("forward step and closed form examples") {
  const Schedule s = Schedule::from_betas({0.19, 0.36, 1.0});
  const std::vector<double> x{1.0, 0.0}, eps{0.0, 1.0};
  const auto a = forward_step(s, x, 1, eps);
  CHECK(a[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(std::sqrt(0.19)).epsilon(1e-15));
  CHECK(forward_step(s, x, 3, eps) == eps);

  // alpha_bar_2 = 0.81 * 0.64; use a one-step schedule for 0.64 exactly
  const Schedule q = Schedule::from_betas({0.36});
  const auto b = q_sample(q, x, 1, eps);
  CHECK(b[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(q_sample(q, x, 0, eps), InputError);
  CHECK_THROWS_AS(q_sample(q, x, 2, eps), InputError);
  CHECK_THROWS_AS(forward_step(s, x, 4, eps), InputError);
}

TEST_CASE("zero beta is the identity") {
  // from_betas rejects 0, so check the limit numerically
  const Schedule s = Schedule::from_betas({1e-300});
  const std::vector<double> x{3.0, -1.0}, eps{0.5, 0.5};
  CHECK(forward_step(s, x, 1, eps) == x);
  CHECK(q_sample(s, x, 1, eps) == x);
}

TEST_CASE("reverse step at t=1 returns the mean") {
  const Schedule s = Schedule::from_betas({0.19});
  Architecture arch;
  arch.data_dim = 1;
  const DenoiserParams zero = init_params(arch, 1);
  const std::vector<double> x1{0.9}, z{123.0};
  const auto x0 = reverse_step(zero, s, x1, 1, 0, z);
  CHECK(x0[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("reverse step with a perfect predictor recovers x0 at t=1") {
  const Schedule s = Schedule::from_betas({0.3});
  const std::vector<double> x0{1.7, -0.4}, eps{0.25, -1.5};
  const auto x1 = q_sample(s, x0, 1, eps);
  const auto back = reverse_step_with(s, x1, 1, eps, std::vector<double>{9.0, 9.0});
  CHECK(back[0] == doctest::Approx(x0[0]).epsilon(1e-14));
  CHECK(back[1] == doctest::Approx(x0[1]).epsilon(1e-14));
}

TEST_CASE("reverse step variance is the posterior variance") {
  const Schedule s = make_linear_schedule(20, 0.01, 0.2);
  const std::size_t t = 12;
  const std::vector<double> xt{0.5}, eps_hat{0.2};
  const double mu = reverse_step_with(s, xt, t, eps_hat, std::vector<double>{0.0})[0];
  Rng r(77);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> z{r.gaussian()};
    const double v = reverse_step_with(s, xt, t, eps_hat, z)[0];
    sum += v;
    sq += (v - mu) * (v - mu);
  }
  const double var = s.posterior_variance(t);
  CHECK(std::abs(sum / n - mu) < 3.0 * std::sqrt(var / n));
  // variance of a sample variance: 2 sigma^4 / n
  CHECK(std::abs(sq / n - var) < 3.0 * var * std::sqrt(2.0 / n));
}

TEST_CASE("q_sample and iterated forward steps share moments") {
  const Schedule s = make_linear_schedule(50, 1e-3, 0.05);
  Rng pick(5);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t t = 1 + pick.uniform_index(50);
    const double x0 = 3.0 * pick.gaussian();
    const int n = 100000;
    Rng r(100 + trial);
    double s1 = 0.0, q1 = 0.0, s2 = 0.0, q2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::vector<double> e{r.gaussian()};
      const double a = q_sample(s, std::vector<double>{x0}, t, e)[0];
      s1 += a;
      q1 += a * a;
      std::vector<double> x{x0};
      for (std::size_t k = 1; k <= t; ++k) x = forward_step(s, x, k, std::vector<double>{r.gaussian()});
      s2 += x[0];
      q2 += x[0] * x[0];
    }
    const double mean = std::sqrt(s.alpha_bar(t)) * x0;
    const double var = 1.0 - s.alpha_bar(t);
    const double tol_m = 3.0 * std::sqrt(var / n);
    const double tol_v = 3.0 * var * std::sqrt(2.0 / n);
    CHECK(std::abs(s1 / n - mean) < tol_m);
    CHECK(std::abs(s2 / n - mean) < tol_m);
    CHECK(std::abs(q1 / n - (s1 / n) * (s1 / n) - var) < tol_v);
    CHECK(std::abs(q2 / n - (s2 / n) * (s2 / n) - var) < tol_v);
  }
}

TEST_CASE("sampling is deterministic and model independent in its draws") {
  Architecture arch;
  arch.num_conditions = 2;
  arch.hidden = {8};
  const DenoiserParams zero = init_params(arch, 1);
  const Schedule s = make_linear_schedule(30);
  Rng a(4), b(4);
  CHECK(sample(zero, s, 1, a) == sample(zero, s, 1, b));
  CHECK(a == b);

  // T = 1 with eps_hat = 0: x0 = x1 / sqrt(alpha_1)
  const Schedule one = Schedule::from_betas({0.19});
  Rng r(6), copy(6);
  const auto x0 = sample(zero, one, 0, r);
  const double x1a = copy.gaussian();
  const double x1b = copy.gaussian();
  CHECK(x0[0] == doctest::Approx(x1a / 0.9).epsilon(1e-15));
  CHECK(x0[1] == doctest::Approx(x1b / 0.9).epsilon(1e-15));

  // stream consumption: d for x_T then d per step above 1
  Rng used(8), expect(8);
  sample(zero, s, 0, used);
  for (std::size_t i = 0; i < 2 + 2 * 29; ++i) expect.gaussian();
  CHECK(used == expect);
}

TEST_CASE("a trained model reproduces a unit Gaussian mean") {
  GmSpec spec = GmSpec::make(1, 2, 1.5, 1.0);
  const Dataset data = gen_gaussian_mixture(spec, 100000, 12);
  TrainConfig cfg;
  cfg.loss.method = Method::sft;
  cfg.steps = 4000;
  cfg.batch_size = 256;
  cfg.base_lr = 1e-4;
  cfg.hidden = {32, 32};
  cfg.timesteps = 50;
  cfg.beta_end = 0.2;
  cfg.seed = 3;
  const Checkpoint ck = train_model(cfg, data).checkpoint;
  const Schedule s = ck.schedule();
  Rng r(99);
  const int n = 10000;
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto x = sample(ck.params, s, 0, r);
    m0 += x[0];
    m1 += x[1];
  }
  const double tol = 3.0 * 1.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(m0 / n - spec.means[0][0]) < tol);
  CHECK(std::abs(m1 / n - spec.means[0][1]) < tol);
}

}
