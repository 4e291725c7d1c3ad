#include "sudo/losses.hpp"

#include <cmath>
#include <string>

#include "sudo/error.hpp"

namespace sudo {
namespace {

// upstream_i = coef * (2/d) * (eps_hat_i - eps_i), the gradient of coef * mse.
void mse_upstream(double coef, std::span<const double> eps_hat, std::span<const double> eps,
                  std::vector<double>& out) {
  const double scale = coef * (2.0 / static_cast<double>(eps.size()));
  out.resize(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = scale * (eps_hat[i] - eps[i]);
}

double traced_error(const DenoiserParams& params, std::size_t c, std::span<const double> x0,
                    std::size_t t, std::span<const double> eps, const Schedule& schedule,
                    ForwardTrace& trace, std::vector<double>& x_t) {
  x_t.resize(x0.size());
  q_sample_into(schedule, x0, t, eps, x_t);
  forward_traced(params, x_t, t, c, trace);
  return mse_loss(trace.output, eps);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::sft: return "sft";
    case Method::sudo: return "sudo";
    case Method::dpo: return "dpo";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "sft") return Method::sft;
  if (text == "sudo") return Method::sudo;
  if (text == "dpo") return Method::dpo;
  throw InputError("unknown method '" + std::string(text) + "'");
}

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    throw ConfigError("lambda1 and lambda2 must be finite and >= 0");
  }
  if (!std::isfinite(scale)) throw ConfigError("scale factor C must be finite");
  if (method != Method::sft && scale == 0.0) {
    throw ConfigError("scale factor C must be non-zero for preference methods");
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double mse_loss(std::span<const double> eps_hat, std::span<const double> eps) {
  if (eps_hat.size() != eps.size() || eps.empty()) {
    throw InputError("mse_loss needs equal, non-empty vectors");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double diff = eps_hat[i] - eps[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(eps.size());
}

double bradley_terry(double r_w, double r_l) { return sigmoid(r_w - r_l); }

double preference_inner(const PairErrors& e, double scale) {
  return scale * ((e.e_w_theta - e.e_l_theta) - (e.e_w_ref - e.e_l_ref));
}

double logsig_loss(double inner) {
  return std::fmax(-inner, 0.0) + std::log1p(std::exp(-std::fabs(inner)));
}

double implicit_reward(double e_theta, double e_ref, double scale) {
  return 0.5 * scale * (e_theta - e_ref);
}

double combined_loss(double mse, double preference, const LossConfig& cfg) {
  return cfg.lambda1 * mse + cfg.lambda2 * preference;
}

PairTerms accumulate_pair_objective(const DenoiserParams& policy, const DenoiserParams& ref,
                                    std::size_t c, std::span<const double> x_w,
                                    std::span<const double> x_l, std::size_t t,
                                    std::span<const double> eps_w, std::span<const double> eps_l,
                                    const Schedule& schedule, double scale, double pair_weight,
                                    double mse_weight, ParamGrads* grads, LossScratch& scratch) {
  if (x_w.size() != x_l.size() || x_w.size() != eps_w.size() || x_w.size() != eps_l.size()) {
    throw InputError("preference pair vectors differ in dimension");
  }
  PairTerms out;
  auto& e = out.errors;
  e.e_w_ref = traced_error(ref, c, x_w, t, eps_w, schedule, scratch.ref, scratch.x_t);
  e.e_l_ref = traced_error(ref, c, x_l, t, eps_l, schedule, scratch.ref, scratch.x_t);
  e.e_l_theta = traced_error(policy, c, x_l, t, eps_l, schedule, scratch.policy_l, scratch.x_t);
  e.e_w_theta = traced_error(policy, c, x_w, t, eps_w, schedule, scratch.policy_w, scratch.x_t);

  out.inner = preference_inner(e, scale);
  out.pair_loss = logsig_loss(out.inner);
  require_finite(out.inner, "preference argument");
  require_finite(out.pair_loss, "preference loss");

  if (grads != nullptr) {
    // d(-log sigmoid(u))/du = sigmoid(u) - 1 = -sigmoid(-u)
    const double dloss_du = -sigmoid(-out.inner);
    const double dloss_dew = dloss_du * scale;
    const double coef_w = pair_weight * dloss_dew + mse_weight;
    const double coef_l = -(pair_weight * dloss_dew);
    if (coef_w != 0.0) {
      mse_upstream(coef_w, scratch.policy_w.output, eps_w, scratch.upstream);
      backward(policy, scratch.policy_w, scratch.upstream, *grads);
    }
    if (coef_l != 0.0) {
      mse_upstream(coef_l, scratch.policy_l.output, eps_l, scratch.upstream);
      backward(policy, scratch.policy_l, scratch.upstream, *grads);
    }
  }
  return out;
}

double accumulate_mse_objective(const DenoiserParams& policy, std::size_t c,
                                std::span<const double> x0, std::size_t t,
                                std::span<const double> eps, const Schedule& schedule,
                                double weight, ParamGrads* grads, LossScratch& scratch) {
  const double err = traced_error(policy, c, x0, t, eps, schedule, scratch.policy_w, scratch.x_t);
  require_finite(err, "diffusion loss");
  if (grads != nullptr && weight != 0.0) {
    mse_upstream(weight, scratch.policy_w.output, eps, scratch.upstream);
    backward(policy, scratch.policy_w, scratch.upstream, *grads);
  }
  return err;
}

PairLoss dpo_pair_loss(const DenoiserParams& policy, const DenoiserParams& ref, std::size_t c,
                       std::span<const double> x_w, std::span<const double> x_l, std::size_t t,
                       std::span<const double> eps_w, std::span<const double> eps_l,
                       const Schedule& schedule, const LossConfig& cfg) {
  if (cfg.scale == 0.0) throw ConfigError("scale factor C must be non-zero");
  if (!(policy.arch() == ref.arch())) throw ConfigError("policy and reference architectures differ");
  PairLoss out;
  out.grads = ParamGrads(policy);
  LossScratch scratch;
  const PairTerms terms = accumulate_pair_objective(policy, ref, c, x_w, x_l, t, eps_w, eps_l,
                                                    schedule, cfg.scale, 1.0, 0.0, &out.grads,
                                                    scratch);
  out.loss = terms.pair_loss;
  out.errors = terms.errors;
  out.inner = terms.inner;
  return out;
}

PairLoss sudo_pair_loss(const DenoiserParams& policy, const DenoiserParams& ref,
                        const PreferencePair& pair, const Schedule& schedule,
                        const LossConfig& cfg) {
  return dpo_pair_loss(policy, ref, pair.condition, pair.x_w, pair.x_sl, pair.t, pair.eps_w,
                       pair.eps_sl, schedule, cfg);
}

}  // namespace sudo
