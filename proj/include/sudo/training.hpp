#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sudo/data.hpp"
#include "sudo/denoiser.hpp"
#include "sudo/diffusion.hpp"
#include "sudo/downgrade.hpp"
#include "sudo/losses.hpp"

namespace sudo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  OptimState() = default;
  explicit OptimState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  friend bool operator==(const OptimState&, const OptimState&) = default;
};

/// Linear warmup over ceil(warmup_frac * total_steps) steps, constant after.
double lr_at(std::size_t step, std::size_t total_steps, double base_lr, double warmup_frac);

/// Bias-corrected Adam with decoupled weight decay applied before the update.
void adam_step(DenoiserParams& params, const ParamGrads& grads, OptimState& state, double lr,
               const AdamConfig& adam);

/// Frozen deep copy used as the reference model.
inline DenoiserParams snapshot_ref(const DenoiserParams& params) { return params; }

/// FNV-1a over the raw parameter bytes; used to check the reference stays frozen.
std::uint64_t params_hash(const DenoiserParams& params);

/// A pre-ranked pair for the dpo method: record indices into the dataset
/// plus the condition both were judged under.
struct RankedPair {
  std::size_t condition = 0;
  std::size_t winner_index = 0;
  std::size_t loser_index = 0;

  friend bool operator==(const RankedPair&, const RankedPair&) = default;
};

struct TrainConfig {
  LossConfig loss;
  std::size_t steps = 3000;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  double warmup_frac = 0.25;
  std::uint64_t seed = 0;
  AdamConfig adam;
  DowngradeStrategy downgrade;
  bool share_noise = false;

  // data_dim and num_conditions are taken from the dataset.
  std::size_t time_dim = 16;
  std::size_t cond_dim = 8;
  std::vector<std::size_t> hidden{64, 64};

  std::size_t timesteps = kDefaultTimesteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;

  /// Required for Method::dpo.
  std::vector<RankedPair> ranked_pairs;

  /// Starting weights; the reference is snapshotted from these. When unset
  /// the policy is freshly initialised from `seed`.
  std::optional<DenoiserParams> init;

  void validate() const;
  Architecture architecture_for(const Dataset& dataset) const;
};

struct Checkpoint {
  Architecture arch;
  std::size_t timesteps = kDefaultTimesteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  Method method = Method::sft;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  DenoiserParams params{Architecture{}};
  std::optional<OptimState> optim;

  Schedule schedule() const { return make_linear_schedule(timesteps, beta_start, beta_end); }
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// One training batch. For sft only condition, x_w, t and eps_w are used.
using Batch = std::vector<PreferencePair>;

/// Deterministic batch for `step`: winner indices come from a per-step
/// stream and each item draws from its own child stream.
Batch build_batch(const TrainConfig& config, const Dataset& dataset, const Schedule& schedule,
                  std::uint64_t step);

struct BatchLoss {
  double total = 0.0;
  double mse = 0.0;         // mean winner error of the policy
  double preference = 0.0;  // mean pair loss (sudo, dpo)
  double inner_mean = 0.0;
  double e_w_theta = 0.0;
  double e_l_theta = 0.0;
};

/// Total loss of the configured method on a batch; accumulates its gradient
/// into `grads` when non-null. Reduction is sequential in item order.
BatchLoss evaluate_batch(const DenoiserParams& policy, const DenoiserParams& ref,
                         const Batch& batch, const Schedule& schedule, const LossConfig& cfg,
                         ParamGrads* grads);

inline constexpr const char* kMetricsHeader =
    "step,lr,loss_total,loss_mse,loss_sudo,inner_mean,e_w_theta,e_l_theta,grad_norm";

struct TrainResult {
  Checkpoint checkpoint;
  std::string metrics_csv;
  std::uint64_t reference_hash = 0;
};

/// Runs the whole fine-tuning loop in memory. Throws NumericError naming the
/// step on a NaN/Inf loss and ConfigError on an incompatible setup.
TrainResult train_model(const TrainConfig& config, const Dataset& dataset);

/// train_model plus atomic writes of the checkpoint and metrics CSV.
Checkpoint train(const TrainConfig& config, const Dataset& dataset,
                 const std::filesystem::path& out_ckpt, const std::filesystem::path& metrics);

/// max_i |fd_i - analytic_i| / max(1, |analytic_i|) with central differences.
double finite_difference_max_rel_error(const std::function<double(std::span<const double>)>& loss,
                                       std::span<const double> point,
                                       std::span<const double> analytic, double h);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t num_params = 0;
  double loss = 0.0;
  double inner_mean = 0.0;
};

/// Compares the analytic gradient of the configured total loss on one batch
/// against central differences. Policy and reference start as the same
/// lightly jittered network, as at the first update of a run.
GradCheckReport grad_check(const TrainConfig& config, const Dataset& dataset, std::uint64_t seed,
                           double h);

/// Small network and dataset used by the `gradcheck` command.
TrainConfig default_gradcheck_config();
Dataset default_gradcheck_dataset(std::uint64_t seed);

}  // namespace sudo
