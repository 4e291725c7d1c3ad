#include "sudo/diffusion.hpp"

#include <cmath>
#include <string>

#include "sudo/error.hpp"

namespace sudo {
namespace {

void check_timestep(const Schedule& schedule, std::size_t t) {
  if (t < 1 || t > schedule.steps()) {
    throw InputError("timestep " + std::to_string(t) + " outside [1, " +
                     std::to_string(schedule.steps()) + "]");
  }
}

void check_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("vector dimension mismatch");
}

}  // namespace

double Schedule::posterior_variance(std::size_t t) const {
  const double abar = alpha_bar(t);
  if (t == 1) return 0.0;
  return (1.0 - alpha_bar(t - 1)) / (1.0 - abar) * beta(t);
}

Schedule Schedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("schedule needs at least one timestep");
  Schedule s;
  s.alphas_.reserve(betas.size());
  s.alpha_bars_.reserve(betas.size());
  double abar = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
    const double a = 1.0 - b;
    abar *= a;
    s.alphas_.push_back(a);
    s.alpha_bars_.push_back(abar);
  }
  s.beta_start_ = betas.front();
  s.beta_end_ = betas.back();
  s.betas_ = std::move(betas);
  return s;
}

Schedule make_linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end <= 1.0)) {
    throw ConfigError("need 0 < beta_start <= beta_end <= 1");
  }
  std::vector<double> betas(T);
  for (std::size_t i = 0; i < T; ++i) {
    betas[i] = T == 1 ? beta_start
                      : beta_start + static_cast<double>(i) * (beta_end - beta_start) /
                                         static_cast<double>(T - 1);
  }
  Schedule s = Schedule::from_betas(std::move(betas));
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  return s;
}

std::vector<double> forward_step(const Schedule& schedule, std::span<const double> x_prev,
                                 std::size_t t, std::span<const double> eps) {
  check_timestep(schedule, t);
  check_same_size(x_prev, eps);
  const double keep = std::sqrt(1.0 - schedule.beta(t));
  const double noise = std::sqrt(schedule.beta(t));
  std::vector<double> out(x_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x_prev[i] + noise * eps[i];
  return out;
}

void q_sample_into(const Schedule& schedule, std::span<const double> x0, std::size_t t,
                   std::span<const double> eps, std::span<double> out) {
  check_timestep(schedule, t);
  check_same_size(x0, eps);
  check_same_size(x0, out);
  const double abar = schedule.alpha_bar(t);
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
}

std::vector<double> q_sample(const Schedule& schedule, std::span<const double> x0, std::size_t t,
                             std::span<const double> eps) {
  std::vector<double> out(x0.size());
  q_sample_into(schedule, x0, t, eps, out);
  return out;
}

std::vector<double> reverse_step_with(const Schedule& schedule, std::span<const double> x_t,
                                      std::size_t t, std::span<const double> eps_hat,
                                      std::span<const double> z) {
  check_timestep(schedule, t);
  check_same_size(x_t, eps_hat);
  for (double v : eps_hat) {
    if (!std::isfinite(v)) throw NumericError("non-finite noise prediction at t=" + std::to_string(t));
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double eps_coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double sigma = std::sqrt(schedule.posterior_variance(t));
  if (t > 1) check_same_size(x_t, z);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mean = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]);
    out[i] = t > 1 ? mean + sigma * z[i] : mean;
    if (!std::isfinite(out[i])) throw NumericError("non-finite sample at t=" + std::to_string(t));
  }
  return out;
}

std::vector<double> reverse_step(const DenoiserParams& params, const Schedule& schedule,
                                 std::span<const double> x_t, std::size_t t, std::size_t c,
                                 std::span<const double> z) {
  check_timestep(schedule, t);
  const auto eps_hat = forward(params, x_t, t, c);
  return reverse_step_with(schedule, x_t, t, eps_hat, z);
}

std::vector<double> sample(const DenoiserParams& params, const Schedule& schedule, std::size_t c,
                           Rng& rng) {
  const std::size_t d = params.arch().data_dim;
  std::vector<double> x = rng.gaussian_vector(d);
  std::vector<double> z(d);
  ForwardTrace trace;
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    if (t > 1) rng.fill_gaussian(z);
    forward_traced(params, x, t, c, trace);
    x = reverse_step_with(schedule, x, t, trace.output, z);
  }
  return x;
}

}  // namespace sudo
