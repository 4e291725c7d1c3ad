#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "sudo/data.hpp"
#include "sudo/error.hpp"
#include "sudo/training.hpp"

using namespace sudo;

namespace {

TrainConfig quick_config(Method m, std::size_t steps = 20) {
  TrainConfig cfg;
  cfg.loss.method = m;
  cfg.steps = steps;
  cfg.batch_size = 8;
  cfg.hidden = {16, 16};
  cfg.time_dim = 8;
  cfg.cond_dim = 4;
  cfg.timesteps = 50;
  cfg.seed = 21;
  return cfg;
}

std::vector<std::string> csv_rows(const std::string& csv) {
  std::vector<std::string> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(row);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!row.empty() && row.back() == ',') out.push_back("");
  return out;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("warmup schedule") {
  CHECK(lr_at(11, 100, 1e-3, 0.25) == doctest::Approx(4.8e-4).epsilon(1e-15));
  CHECK(lr_at(24, 100, 1e-3, 0.25) == 1e-3);
  CHECK(lr_at(23, 100, 1e-3, 0.25) < 1e-3);
  CHECK(lr_at(99, 100, 1e-3, 0.25) == 1e-3);
  CHECK(lr_at(0, 100, 1e-3, 0.0) == 1e-3);
  double prev = 0.0;
  for (std::size_t s = 0; s < 30; ++s) {
    const double lr = lr_at(s, 30, 2e-3, 0.25);
    CHECK(lr >= prev);
    if (s >= 8) CHECK(lr == 2e-3);
    prev = lr;
  }
}

TEST_CASE("adam") {
  Architecture arch;
  arch.data_dim = 1;
  arch.time_dim = 2;
  arch.cond_dim = 1;
  arch.hidden = {1};
  DenoiserParams p(arch);
  ParamGrads g(p);
  OptimState st(p.size());
  adam_step(p, g, st, 0.1, AdamConfig{});
  for (double v : p.values()) CHECK(v == 0.0);

  DenoiserParams q(arch);
  ParamGrads one(q);
  one.values[0] = 1.0;
  OptimState s2(q.size());
  adam_step(q, one, s2, 0.1, AdamConfig{});
  CHECK(q.values()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(s2.step == 1);

  // decoupled decay shrinks before the update
  DenoiserParams r(arch);
  r.values()[1] = 2.0;
  OptimState s3(r.size());
  AdamConfig decay;
  decay.weight_decay = 0.5;
  adam_step(r, ParamGrads(r), s3, 0.1, decay);
  CHECK(r.values()[1] == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-15));
}

TEST_CASE("config validation") {
  TrainConfig cfg = quick_config(Method::sudo);
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config(Method::sudo);
  cfg.warmup_frac = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config(Method::dpo);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 40, 1);
  cfg = quick_config(Method::sudo);
  cfg.downgrade.kind = DowngradeKind::blur;
  CHECK_THROWS_AS(train_model(cfg, gm), ConfigError);
}

TEST_CASE("metrics rows and step-0 values") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 200, 2);
  const TrainResult sudo_run = train_model(quick_config(Method::sudo), gm);
  const auto rows = csv_rows(sudo_run.metrics_csv);
  REQUIRE(rows.size() == 21);
  CHECK(rows[0] == kMetricsHeader);
  const auto first = split(rows[1]);
  REQUIRE(first.size() == 9);
  CHECK(first[0] == "0");
  CHECK(std::abs(std::stod(first[4]) - std::numbers::ln2) <= 1e-12);
  CHECK(std::stod(first[5]) == 0.0);

  const TrainResult sft_run = train_model(quick_config(Method::sft), gm);
  const auto sft_rows = csv_rows(sft_run.metrics_csv);
  REQUIRE(sft_rows.size() == 21);
  const auto s0 = split(sft_rows[1]);
  REQUIRE(s0.size() == 9);
  CHECK(s0[4].empty());
  // zero output layer: the winner error is the raw noise energy, mean 1 per
  // dimension; over 8 items x 2 dims the 3 sigma band is 3 * sqrt(2 / 16)
  CHECK(std::abs(std::stod(s0[3]) - 1.0) < 3.0 * std::sqrt(2.0 / 16.0));
}

TEST_CASE("reference stays frozen") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 100, 3);
  TrainConfig cfg = quick_config(Method::sudo, 100);
  const DenoiserParams init = init_params(cfg.architecture_for(gm), cfg.seed);
  const DenoiserParams snap = snapshot_ref(init);
  CHECK(snap == init);
  const TrainResult run = train_model(cfg, gm);
  CHECK(run.reference_hash == params_hash(snap));
  CHECK_FALSE(run.checkpoint.params == snap);
  CHECK(run.checkpoint.step == 100);
}

TEST_CASE("disabled preference term leaves the sft trajectory") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 100, 4);
  TrainConfig sft = quick_config(Method::sft, 30);
  TrainConfig sudo = quick_config(Method::sudo, 30);
  sudo.loss.lambda2 = 0.0;
  const Checkpoint a = train_model(sft, gm).checkpoint;
  const Checkpoint b = train_model(sudo, gm).checkpoint;
  CHECK(a.params == b.params);
}

TEST_CASE("training is deterministic") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 100, 5);
  const TrainConfig cfg = quick_config(Method::sudo, 25);
  const TrainResult a = train_model(cfg, gm);
  const TrainResult b = train_model(cfg, gm);
  CHECK(a.metrics_csv == b.metrics_csv);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
}

TEST_CASE("batches") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 100, 6);
  const TrainConfig cfg = quick_config(Method::sudo);
  const Schedule s = make_linear_schedule(cfg.timesteps);
  const Batch b0 = build_batch(cfg, gm, s, 0);
  CHECK(b0.size() == 8);
  CHECK(b0 == build_batch(cfg, gm, s, 0));
  CHECK_FALSE(b0 == build_batch(cfg, gm, s, 1));

  // policy == reference: batch-mean preference loss is exactly ln 2
  const DenoiserParams p = init_params(cfg.architecture_for(gm), 1);
  const BatchLoss bl = evaluate_batch(p, p, b0, s, cfg.loss, nullptr);
  CHECK(std::abs(bl.preference - std::numbers::ln2) <= 1e-12);
  CHECK(bl.total == doctest::Approx(0.5 * bl.mse + 0.5 * std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("checkpoint round trip") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(3, 2), 60, 7);
  const Checkpoint ck = train_model(quick_config(Method::sudo, 5), gm).checkpoint;
  const std::string bytes = encode_checkpoint(ck);
  CHECK(bytes.substr(0, 4) == "SUDC");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.arch == ck.arch);
  CHECK(back.params == ck.params);
  CHECK(back.method == Method::sudo);
  CHECK(back.step == 5);
  CHECK(back.seed == 21);
  REQUIRE(back.optim.has_value());
  CHECK(*back.optim == *ck.optim);
  CHECK(encode_checkpoint(back) == bytes);

  Checkpoint bare = ck;
  bare.optim.reset();
  CHECK_FALSE(decode_checkpoint(encode_checkpoint(bare)).optim.has_value());

  std::string bad = bytes;
  bad[1] = '?';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 40)), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "sudo_test_ck.sudc";
  save_checkpoint(ck, path);
  CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("finite differences are exact on a quadratic") {
  const std::vector<double> point{0.3, -1.2, 2.0, 0.7};
  auto fn = [](std::span<const double> v) {
    return 1.5 * v[0] * v[0] - 2.0 * v[1] + 0.25 * v[2] * v[3] + 3.0;
  };
  const std::vector<double> grad{3.0 * 0.3, -2.0, 0.25 * 0.7, 0.25 * 2.0};
  CHECK(finite_difference_max_rel_error(fn, point, grad, 1e-5) < 1e-9);
}

TEST_CASE("mse is stationary at a perfect prediction") {
  // a net whose output layer bias equals the noise predicts it exactly
  Architecture arch;
  arch.data_dim = 2;
  arch.hidden = {4};
  arch.time_dim = 2;
  arch.cond_dim = 2;
  DenoiserParams p = init_params(arch, 1);
  const std::vector<double> eps{0.3, -0.8}, x0{1.0, 2.0};
  p.values()[p.bias_offset(1)] = eps[0];
  p.values()[p.bias_offset(1) + 1] = eps[1];
  const Schedule s = make_linear_schedule();
  LossScratch scratch;
  ParamGrads g(p);
  const double loss = accumulate_mse_objective(p, 0, x0, 10, eps, s, 1.0, &g, scratch);
  CHECK(loss == 0.0);
  auto fn = [&](std::span<const double> v) {
    DenoiserParams q = p;
    std::copy(v.begin(), v.end(), q.values().begin());
    LossScratch sc;
    return accumulate_mse_objective(q, 0, x0, 10, eps, s, 1.0, nullptr, sc);
  };
  double worst = 0.0;
  std::vector<double> v(p.values().begin(), p.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + 1e-5;
    const double fp = fn(v);
    v[i] = keep - 1e-5;
    const double fm = fn(v);
    v[i] = keep;
    worst = std::max(worst, std::abs((fp - fm) / 2e-5 - g.values[i]));
    CHECK(g.values[i] == 0.0);
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("grad check on the default small net") {
  const TrainConfig base = default_gradcheck_config();
  const Dataset data = default_gradcheck_dataset(1);
  for (Method m : {Method::sft, Method::sudo}) {
    TrainConfig cfg = base;
    cfg.loss.method = m;
    const GradCheckReport rep = grad_check(cfg, data, 1, 1e-5);
    CHECK(rep.num_params <= 2000);
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("non-finite loss names the step") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(2, 2), 50, 8);
  TrainConfig cfg = quick_config(Method::sft, 10);
  DenoiserParams init = init_params(cfg.architecture_for(gm), 1);
  init.values()[init.bias_offset(init.arch().num_layers() - 1)] = 1e200;
  cfg.init = init;
  try {
    train_model(cfg, gm);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

}
