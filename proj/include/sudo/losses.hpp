#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "sudo/denoiser.hpp"
#include "sudo/diffusion.hpp"
#include "sudo/downgrade.hpp"

namespace sudo {

enum class Method : std::uint8_t { sft = 0, sudo = 1, dpo = 2 };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

inline constexpr double kDefaultScale = -2500.0;

struct LossConfig {
  double scale = kDefaultScale;  // C
  double lambda1 = 0.5;          // MSE weight
  double lambda2 = 0.5;          // preference weight
  Method method = Method::sudo;

  void validate() const;
};

/// Mean-reduced squared noise-prediction errors of one preference pair.
struct PairErrors {
  double e_w_theta = 0.0;
  double e_l_theta = 0.0;
  double e_w_ref = 0.0;
  double e_l_ref = 0.0;
};

/// mean_i (eps_hat_i - eps_i)^2
double mse_loss(std::span<const double> eps_hat, std::span<const double> eps);

double bradley_terry(double r_w, double r_l);

/// C * ((e_w_theta - e_l_theta) - (e_w_ref - e_l_ref))
double preference_inner(const PairErrors& errors, double scale);

/// -log sigmoid(inner) = softplus(-inner), overflow-safe.
double logsig_loss(double inner);

/// (C/2) * (e_theta - e_ref); a logging diagnostic.
double implicit_reward(double e_theta, double e_ref, double scale);

double combined_loss(double mse, double preference, const LossConfig& cfg);

double sigmoid(double z);

struct PairLoss {
  double loss = 0.0;
  ParamGrads grads;
  PairErrors errors;
  double inner = 0.0;
};

/// Preference loss on a self-generated pair. Gradients flow through the
/// policy only; `ref` is treated as a constant.
PairLoss sudo_pair_loss(const DenoiserParams& policy, const DenoiserParams& ref,
                        const PreferencePair& pair, const Schedule& schedule,
                        const LossConfig& cfg);

/// Same computation with an externally ranked loser.
PairLoss dpo_pair_loss(const DenoiserParams& policy, const DenoiserParams& ref, std::size_t c,
                       std::span<const double> x_w, std::span<const double> x_l, std::size_t t,
                       std::span<const double> eps_w, std::span<const double> eps_l,
                       const Schedule& schedule, const LossConfig& cfg);

/// Reusable buffers for the per-pair kernels below.
struct LossScratch {
  ForwardTrace policy_w;
  ForwardTrace policy_l;
  ForwardTrace ref;
  std::vector<double> x_t;
  std::vector<double> upstream;
};

struct PairTerms {
  double pair_loss = 0.0;
  PairErrors errors;
  double inner = 0.0;
};

/// Evaluates one pair and, when `grads` is non-null, accumulates
///   pair_weight * d(pair loss) + mse_weight * d(e_w_theta)
/// into it. The winner-side MSE reuses the winner's policy forward pass.
PairTerms accumulate_pair_objective(const DenoiserParams& policy, const DenoiserParams& ref,
                                    std::size_t c, std::span<const double> x_w,
                                    std::span<const double> x_l, std::size_t t,
                                    std::span<const double> eps_w, std::span<const double> eps_l,
                                    const Schedule& schedule, double scale, double pair_weight,
                                    double mse_weight, ParamGrads* grads, LossScratch& scratch);

/// Noises x0 at t, evaluates the policy MSE and accumulates weight * d(mse).
double accumulate_mse_objective(const DenoiserParams& policy, std::size_t c,
                                std::span<const double> x0, std::size_t t,
                                std::span<const double> eps, const Schedule& schedule,
                                double weight, ParamGrads* grads, LossScratch& scratch);

}  // namespace sudo
