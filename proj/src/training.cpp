#include "sudo/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <string>

#include "sudo/error.hpp"
#include "sudo/io.hpp"
#include "sudo/rng.hpp"

namespace sudo {
namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C4ULL;
constexpr std::uint64_t kGradCheckStream = 0x6C4ECULL;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_metrics_row(std::string& csv, std::size_t step, double lr, const BatchLoss& loss,
                        Method method, double grad_norm) {
  const bool pref = method != Method::sft;
  csv += std::to_string(step);
  csv += ',' + fmt_double(lr);
  csv += ',' + fmt_double(loss.total);
  csv += ',' + fmt_double(loss.mse);
  csv += ',' + (pref ? fmt_double(loss.preference) : std::string());
  csv += ',' + (pref ? fmt_double(loss.inner_mean) : std::string());
  csv += ',' + fmt_double(loss.e_w_theta);
  csv += ',' + (pref ? fmt_double(loss.e_l_theta) : std::string());
  csv += ',' + fmt_double(grad_norm);
  csv += '\n';
}

}  // namespace

double lr_at(std::size_t step, std::size_t total_steps, double base_lr, double warmup_frac) {
  const auto warmup_steps =
      static_cast<std::size_t>(std::ceil(warmup_frac * static_cast<double>(total_steps)));
  if (warmup_steps == 0) return base_lr;
  const double ramp = static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  return base_lr * std::min(1.0, ramp);
}

void adam_step(DenoiserParams& params, const ParamGrads& grads, OptimState& state, double lr,
               const AdamConfig& adam) {
  auto p = params.values();
  if (grads.values.size() != p.size() || state.m.size() != p.size() ||
      state.v.size() != p.size()) {
    throw std::logic_error("adam_step: parameter, gradient and state shapes differ");
  }
  state.step += 1;
  const double step = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(adam.beta1, step);
  const double bias2 = 1.0 - std::pow(adam.beta2, step);
  const double decay = 1.0 - lr * adam.weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grads.values[i];
    state.m[i] = adam.beta1 * state.m[i] + (1.0 - adam.beta1) * g;
    state.v[i] = adam.beta2 * state.v[i] + (1.0 - adam.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    if (adam.weight_decay != 0.0) p[i] *= decay;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + adam.eps);
  }
}

std::uint64_t params_hash(const DenoiserParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void TrainConfig::validate() const {
  loss.validate();
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(warmup_frac >= 0.0 && warmup_frac <= 1.0)) throw ConfigError("warmup fraction must lie in [0, 1]");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("learning rate must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (loss.method == Method::dpo && ranked_pairs.empty()) {
    throw ConfigError("dpo training needs pre-ranked pairs");
  }
  make_linear_schedule(timesteps, beta_start, beta_end);
}

Architecture TrainConfig::architecture_for(const Dataset& dataset) const {
  Architecture arch;
  arch.data_dim = dataset.value_dim();
  arch.num_conditions = dataset.num_conditions;
  arch.time_dim = time_dim;
  arch.cond_dim = cond_dim;
  arch.hidden = hidden;
  arch.validate();
  return arch;
}

Batch build_batch(const TrainConfig& config, const Dataset& dataset, const Schedule& schedule,
                  std::uint64_t step) {
  const Rng step_base = Rng(config.seed).child(kBatchStream).child(step);
  Rng picker = step_base;
  Batch batch;
  batch.reserve(config.batch_size);
  const std::size_t d = dataset.value_dim();
  for (std::size_t i = 0; i < config.batch_size; ++i) {
    Rng item_rng = step_base.child(1 + i);
    switch (config.loss.method) {
      case Method::sft: {
        const std::size_t w = picker.uniform_index(dataset.size());
        PreferencePair item;
        item.condition = dataset.records[w].label;
        item.x_w = dataset.records[w].values;
        item.t = 1 + item_rng.uniform_index(schedule.steps());
        item.eps_w = item_rng.gaussian_vector(d);
        batch.push_back(std::move(item));
        break;
      }
      case Method::sudo: {
        const std::size_t w = picker.uniform_index(dataset.size());
        batch.push_back(
            make_pair(dataset, w, config.downgrade, schedule, item_rng, config.share_noise));
        break;
      }
      case Method::dpo: {
        const RankedPair& rp = config.ranked_pairs[picker.uniform_index(config.ranked_pairs.size())];
        if (rp.winner_index >= dataset.size() || rp.loser_index >= dataset.size() ||
            rp.condition >= dataset.num_conditions) {
          throw ConfigError("ranked pair refers to a record outside the dataset");
        }
        PreferencePair item;
        item.condition = rp.condition;
        item.x_w = dataset.records[rp.winner_index].values;
        item.x_sl = dataset.records[rp.loser_index].values;
        item.t = 1 + item_rng.uniform_index(schedule.steps());
        item.eps_w = item_rng.gaussian_vector(d);
        item.eps_sl = config.share_noise ? item.eps_w : item_rng.gaussian_vector(d);
        batch.push_back(std::move(item));
        break;
      }
    }
  }
  return batch;
}

BatchLoss evaluate_batch(const DenoiserParams& policy, const DenoiserParams& ref,
                         const Batch& batch, const Schedule& schedule, const LossConfig& cfg,
                         ParamGrads* grads) {
  if (batch.empty()) throw InputError("empty batch");
  const double n = static_cast<double>(batch.size());
  LossScratch scratch;
  BatchLoss out;
  double sum_mse = 0.0, sum_pref = 0.0, sum_inner = 0.0, sum_el = 0.0;
  for (const auto& item : batch) {
    if (cfg.method == Method::sft) {
      sum_mse += accumulate_mse_objective(policy, item.condition, item.x_w, item.t, item.eps_w,
                                          schedule, cfg.lambda1 / n, grads, scratch);
      continue;
    }
    const bool dpo = cfg.method == Method::dpo;
    const double pair_weight = dpo ? 1.0 / n : cfg.lambda2 / n;
    const double mse_weight = dpo ? 0.0 : cfg.lambda1 / n;
    const PairTerms terms =
        accumulate_pair_objective(policy, ref, item.condition, item.x_w, item.x_sl, item.t,
                                  item.eps_w, item.eps_sl, schedule, cfg.scale, pair_weight,
                                  mse_weight, grads, scratch);
    sum_mse += terms.errors.e_w_theta;
    sum_pref += terms.pair_loss;
    sum_inner += terms.inner;
    sum_el += terms.errors.e_l_theta;
  }
  out.mse = sum_mse / n;
  out.e_w_theta = out.mse;
  if (cfg.method != Method::sft) {
    out.preference = sum_pref / n;
    out.inner_mean = sum_inner / n;
    out.e_l_theta = sum_el / n;
  }
  switch (cfg.method) {
    case Method::sft: out.total = cfg.lambda1 * out.mse; break;
    case Method::sudo: out.total = combined_loss(out.mse, out.preference, cfg); break;
    case Method::dpo: out.total = out.preference; break;
  }
  return out;
}

TrainResult train_model(const TrainConfig& config, const Dataset& dataset) {
  config.validate();
  dataset.validate();
  if (config.loss.method == Method::sudo) config.downgrade.check_compatible(dataset);

  const Architecture arch = config.architecture_for(dataset);
  const Schedule schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end);
  DenoiserParams policy = config.init ? *config.init : init_params(arch, config.seed);
  if (!(policy.arch() == arch)) throw ConfigError("initial checkpoint does not match the dataset and architecture");
  const DenoiserParams ref = snapshot_ref(policy);
  OptimState optim(policy.size());

  TrainResult result;
  result.reference_hash = params_hash(ref);
  result.metrics_csv = std::string(kMetricsHeader) + "\n";
  ParamGrads grads(policy);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = build_batch(config, dataset, schedule, step);
    std::fill(grads.values.begin(), grads.values.end(), 0.0);
    BatchLoss loss;
    try {
      loss = evaluate_batch(policy, ref, batch, schedule, config.loss, &grads);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }
    const double grad_norm = grads.norm();
    if (!std::isfinite(grad_norm)) {
      throw NumericError("non-finite gradient at step " + std::to_string(step));
    }
    const double lr = lr_at(step, config.steps, config.base_lr, config.warmup_frac);
    append_metrics_row(result.metrics_csv, step, lr, loss, config.loss.method, grad_norm);
    adam_step(policy, grads, optim, lr, config.adam);
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.arch = arch;
  ckpt.timesteps = config.timesteps;
  ckpt.beta_start = config.beta_start;
  ckpt.beta_end = config.beta_end;
  ckpt.method = config.loss.method;
  ckpt.step = config.steps;
  ckpt.seed = config.seed;
  ckpt.params = std::move(policy);
  ckpt.optim = std::move(optim);
  return result;
}

Checkpoint train(const TrainConfig& config, const Dataset& dataset,
                 const std::filesystem::path& out_ckpt, const std::filesystem::path& metrics) {
  TrainResult result = train_model(config, dataset);
  save_checkpoint(result.checkpoint, out_ckpt);
  atomic_write(metrics, result.metrics_csv);
  return std::move(result.checkpoint);
}

double finite_difference_max_rel_error(const std::function<double(std::span<const double>)>& loss,
                                       std::span<const double> point,
                                       std::span<const double> analytic, double h) {
  if (point.size() != analytic.size()) throw InputError("gradient length mismatch");
  std::vector<double> probe(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::fabs(fd - analytic[i]) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

GradCheckReport grad_check(const TrainConfig& config, const Dataset& dataset, std::uint64_t seed,
                           double h) {
  TrainConfig cfg = config;
  cfg.seed = seed;
  cfg.validate();
  dataset.validate();
  const Architecture arch = cfg.architecture_for(dataset);
  const Schedule schedule = make_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);

  Rng rng = Rng(seed).child(kGradCheckStream);
  DenoiserParams ref = init_params(arch, seed);
  // small jitter keeps the output layer non-zero; policy == ref is the first-update state
  for (double& v : ref.values()) v += 0.01 * rng.gaussian();
  DenoiserParams policy = ref;

  const Batch batch = build_batch(cfg, dataset, schedule, 0);
  ParamGrads grads(policy);
  const BatchLoss at = evaluate_batch(policy, ref, batch, schedule, cfg.loss, &grads);

  DenoiserParams probe = policy;
  auto loss_fn = [&](std::span<const double> values) {
    std::copy(values.begin(), values.end(), probe.values().begin());
    return evaluate_batch(probe, ref, batch, schedule, cfg.loss, nullptr).total;
  };
  GradCheckReport report;
  report.max_rel_err = finite_difference_max_rel_error(loss_fn, policy.values(), grads.values, h);
  report.num_params = policy.size();
  report.loss = at.total;
  report.inner_mean = at.inner_mean;
  return report;
}

TrainConfig default_gradcheck_config() {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 1;
  cfg.time_dim = 8;
  cfg.cond_dim = 4;
  cfg.hidden = {16, 16};
  return cfg;
}

Dataset default_gradcheck_dataset(std::uint64_t seed) {
  return gen_gaussian_mixture(GmSpec::make(4, 2), 64, seed);
}

}  // namespace sudo
