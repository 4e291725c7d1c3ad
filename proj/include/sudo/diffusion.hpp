#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sudo/denoiser.hpp"
#include "sudo/rng.hpp"

namespace sudo {

/// Linear beta schedule over 1-indexed timesteps t = 1..T, with alpha_bar(0) = 1.
class Schedule {
 public:
  Schedule() = default;

  std::size_t steps() const noexcept { return betas_.size(); }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return alphas_.at(t - 1); }
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars_.at(t - 1); }

  /// Posterior variance ((1 - abar_{t-1}) / (1 - abar_t)) * beta_t; zero at t = 1.
  double posterior_variance(std::size_t t) const;

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

  /// Builds alphas and alpha_bars from explicit betas, each in (0, 1].
  static Schedule from_betas(std::vector<double> betas);

  friend Schedule make_linear_schedule(std::size_t T, double beta_start, double beta_end);

 private:
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

inline constexpr std::size_t kDefaultTimesteps = 200;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

Schedule make_linear_schedule(std::size_t T = kDefaultTimesteps,
                              double beta_start = kDefaultBetaStart,
                              double beta_end = kDefaultBetaEnd);

/// One Markov noising step: sqrt(1 - beta_t) x_prev + sqrt(beta_t) eps.
std::vector<double> forward_step(const Schedule& schedule, std::span<const double> x_prev,
                                 std::size_t t, std::span<const double> eps);

/// Closed-form marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
std::vector<double> q_sample(const Schedule& schedule, std::span<const double> x0, std::size_t t,
                             std::span<const double> eps);
void q_sample_into(const Schedule& schedule, std::span<const double> x0, std::size_t t,
                   std::span<const double> eps, std::span<double> out);

/// Ancestral step with fixed variance beta~_t. `z` is ignored at t = 1.
std::vector<double> reverse_step(const DenoiserParams& params, const Schedule& schedule,
                                 std::span<const double> x_t, std::size_t t, std::size_t c,
                                 std::span<const double> z);

/// Same as reverse_step but with a precomputed noise prediction.
std::vector<double> reverse_step_with(const Schedule& schedule, std::span<const double> x_t,
                                      std::size_t t, std::span<const double> eps_hat,
                                      std::span<const double> z);

/// Draws x_T ~ N(0, I) and runs reverse_step from T down to 1. Draws d
/// normals for x_T and d more per step t > 1, independent of the model, so
/// two models fed copies of one stream see identical noise.
std::vector<double> sample(const DenoiserParams& params, const Schedule& schedule, std::size_t c,
                           Rng& rng);

}  // namespace sudo
