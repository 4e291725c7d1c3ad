#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sudo/error.hpp"
#include "sudo/harness.hpp"
#include "sudo/io.hpp"

namespace sudo {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradCheck = 4;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> widths;
  for (const auto& part : split(text, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != part.size()) throw InputError("invalid layer width '" + part + "'");
    widths.push_back(v);
  }
  if (widths.empty()) throw InputError("need at least one hidden width");
  return widths;
}

std::string format_sample_csv(std::size_t cond, const std::vector<std::vector<double>>& samples,
                              std::size_t d) {
  std::string csv = "condition";
  for (std::size_t j = 0; j < d; ++j) csv += ",x_" + std::to_string(j + 1);
  csv += '\n';
  char buf[32];
  for (const auto& s : samples) {
    csv += std::to_string(cond);
    for (double v : s) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      csv += buf;
    }
    csv += '\n';
  }
  return csv;
}

struct GenDataArgs {
  std::string kind = "gm";
  std::size_t k = 4;
  std::size_t d = 2;
  std::size_t side = 8;
  std::size_t n = 4000;
  double sigma = 0.5;
  double radius = 4.0;
  std::string seed = "0";
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string method = "sudo";
  std::string downgrade = "random-image";
  std::size_t blur_factor = 4;
  std::size_t grid_count = 8;
  double c = kDefaultScale;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  std::size_t steps = 3000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double warmup_frac = 0.25;
  double weight_decay = 0.0;
  std::string seed = "0";
  bool share_noise = false;
  bool allow_same_label = false;
  std::string hidden = "64,64";
  std::size_t time_dim = 16;
  std::size_t cond_dim = 8;
  std::size_t timesteps = kDefaultTimesteps;
  std::string pairs;
  std::size_t dpo_pairs = 0;
  std::string init_ckpt;
  std::string out_ckpt;
  std::string metrics;
};

struct SampleArgs {
  std::string ckpt;
  std::size_t cond = 0;
  std::size_t n = 100;
  std::string seed = "0";
  std::string out;
};

struct EvalArgs {
  std::string ckpt_a;
  std::string ckpt_b;
  std::string data;
  std::size_t n_per_cond = 250;
  std::string seed = "0";
  std::string report;
};

struct AblateArgs {
  std::string data;
  std::size_t steps = 3000;
  std::size_t batch = 64;
  std::string seeds = "1,2,3";
  std::size_t n_per_cond = 250;
  bool share_noise = false;
  bool no_mse = false;
  std::string hidden = "64,64";
  std::string out;
};

struct GradCheckArgs {
  std::string seed = "1";
  double h = 1e-5;
  double tol = 1e-4;
  std::string method = "sudo";
  double lambda1 = 0.5;
  double lambda2 = 0.5;
};

int run_gen_data(const GenDataArgs& a, std::ostream& out) {
  const std::uint64_t seed = parse_seed(a.seed);
  Dataset ds;
  if (a.kind == "gm") {
    ds = gen_gaussian_mixture(GmSpec::make(a.k, a.d, a.radius, a.sigma), a.n, seed);
  } else if (a.kind == "grid") {
    ds = gen_pattern_grid(a.k, a.side, a.n, a.sigma, seed);
  } else {
    throw InputError("--kind must be gm or grid");
  }
  save_dataset(ds, a.out);
  ordered_json j;
  j["command"] = "gen-data";
  j["kind"] = a.kind;
  j["n"] = ds.size();
  j["k"] = ds.num_conditions;
  j["value_dim"] = ds.value_dim();
  j["seed"] = seed;
  j["out"] = a.out;
  out << j.dump() << '\n';
  return kExitOk;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  TrainConfig cfg;
  cfg.loss.method = parse_method(a.method);
  cfg.loss.scale = a.c;
  cfg.loss.lambda1 = a.lambda1;
  cfg.loss.lambda2 = a.lambda2;
  cfg.steps = a.steps;
  cfg.batch_size = a.batch;
  cfg.base_lr = a.lr;
  cfg.warmup_frac = a.warmup_frac;
  cfg.adam.weight_decay = a.weight_decay;
  cfg.seed = parse_seed(a.seed);
  cfg.downgrade.kind = parse_downgrade_kind(a.downgrade);
  cfg.downgrade.blur_factor = a.blur_factor;
  cfg.downgrade.grid_count = a.grid_count;
  cfg.downgrade.allow_same_label = a.allow_same_label;
  cfg.share_noise = a.share_noise;
  cfg.hidden = parse_widths(a.hidden);
  cfg.time_dim = a.time_dim;
  cfg.cond_dim = a.cond_dim;
  cfg.timesteps = a.timesteps;
  if (!a.init_ckpt.empty()) {
    Checkpoint base = load_checkpoint(a.init_ckpt);
    cfg.hidden = base.arch.hidden;
    cfg.time_dim = base.arch.time_dim;
    cfg.cond_dim = base.arch.cond_dim;
    cfg.timesteps = base.timesteps;
    cfg.beta_start = base.beta_start;
    cfg.beta_end = base.beta_end;
    cfg.init = std::move(base.params);
  }
  if (cfg.loss.method == Method::dpo) {
    if (!a.pairs.empty()) {
      cfg.ranked_pairs = decode_ranked_pairs(read_file(a.pairs));
    } else {
      cfg.ranked_pairs = make_ranked_pairs(ds, a.dpo_pairs ? a.dpo_pairs : ds.size(), cfg.seed);
    }
  }
  const TrainResult result = train_model(cfg, ds);
  save_checkpoint(result.checkpoint, a.out_ckpt);
  atomic_write(a.metrics, result.metrics_csv);

  ordered_json j;
  j["command"] = "train";
  j["method"] = to_string(cfg.loss.method);
  if (cfg.loss.method == Method::sudo) j["downgrade"] = to_string(cfg.downgrade.kind);
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch_size;
  j["lr"] = cfg.base_lr;
  j["seed"] = cfg.seed;
  j["params"] = result.checkpoint.params.size();
  j["out_ckpt"] = a.out_ckpt;
  j["metrics"] = a.metrics;
  out << j.dump() << '\n';
  return kExitOk;
}

int run_sample(const SampleArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  if (a.cond >= ckpt.arch.num_conditions) throw InputError("--cond out of range");
  const std::uint64_t seed = parse_seed(a.seed);
  const Schedule schedule = ckpt.schedule();
  std::vector<std::vector<double>> samples;
  for (std::size_t i = 0; i < a.n; ++i) {
    Rng rng = eval_stream(seed, a.cond, i);
    samples.push_back(sample(ckpt.params, schedule, a.cond, rng));
  }
  atomic_write(a.out, format_sample_csv(a.cond, samples, ckpt.arch.data_dim));
  ordered_json j;
  j["command"] = "sample";
  j["cond"] = a.cond;
  j["n"] = a.n;
  j["seed"] = seed;
  j["out"] = a.out;
  out << j.dump() << '\n';
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ca = load_checkpoint(a.ckpt_a);
  const Checkpoint cb = load_checkpoint(a.ckpt_b);
  const Dataset ds = load_dataset(a.data);
  const EvalReport report = paired_eval(ca, cb, ds.spec, a.n_per_cond, parse_seed(a.seed));
  const std::string json = report.to_json();
  if (!a.report.empty()) atomic_write(a.report, json + "\n");
  out << json << '\n';
  return kExitOk;
}

int run_ablate(const AblateArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  TrainConfig base;
  base.steps = a.steps;
  base.batch_size = a.batch;
  base.share_noise = a.share_noise;
  base.hidden = parse_widths(a.hidden);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(a.seeds, ',')) seeds.push_back(parse_seed(s));
  AblationOptions options;
  options.n_per_condition = a.n_per_cond;
  options.include_no_mse = a.no_mse;
  const AblationTable table = run_ablation(ds, base, seeds, options);
  atomic_write(a.out, table.to_csv());

  ordered_json j;
  j["command"] = "ablate";
  j["seeds"] = seeds;
  ordered_json rows = ordered_json::object();
  for (const auto& r : table.rows) {
    if (r.applicable) {
      rows[std::string(to_string(r.kind))] = {{"mean_alignment", r.mean_alignment},
                                              {"win_rate_vs_sft", r.win_rate_vs_sft}};
    } else {
      rows[std::string(to_string(r.kind))] = nullptr;
    }
  }
  j["rows"] = rows;
  j["out"] = a.out;
  out << j.dump() << '\n';
  return kExitOk;
}

int run_gradcheck(const GradCheckArgs& a, std::ostream& out) {
  const std::uint64_t seed = parse_seed(a.seed);
  TrainConfig cfg = default_gradcheck_config();
  cfg.loss.method = parse_method(a.method);
  cfg.loss.lambda1 = a.lambda1;
  cfg.loss.lambda2 = a.lambda2;
  const Dataset ds = default_gradcheck_dataset(seed);
  if (cfg.loss.method == Method::dpo) cfg.ranked_pairs = make_ranked_pairs(ds, ds.size(), seed);
  const GradCheckReport report = grad_check(cfg, ds, seed, a.h);
  if (!std::isfinite(report.max_rel_err)) throw NumericError("non-finite gradient check");
  const bool ok = report.max_rel_err < a.tol;
  ordered_json j;
  j["command"] = "gradcheck";
  j["method"] = to_string(cfg.loss.method);
  j["seed"] = seed;
  j["h"] = a.h;
  j["tol"] = a.tol;
  j["num_params"] = report.num_params;
  j["max_rel_err"] = report.max_rel_err;
  j["pass"] = ok;
  out << j.dump() << '\n';
  return ok ? kExitOk : kExitGradCheck;
}

}  // namespace

int cli_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion fine-tuning with self-supervised preference pairs"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic conditional dataset");
  gen_cmd->add_option("--kind", gen.kind, "gm or grid")->check(CLI::IsMember({"gm", "grid"}));
  gen_cmd->add_option("--k", gen.k, "Number of conditions");
  gen_cmd->add_option("--d", gen.d, "Dimension (gm)");
  gen_cmd->add_option("--side", gen.side, "Grid side (grid)");
  gen_cmd->add_option("--n", gen.n, "Number of records");
  gen_cmd->add_option("--sigma", gen.sigma, "Component std (gm) or pixel noise std (grid)");
  gen_cmd->add_option("--radius", gen.radius, "Distance of the means from the origin (gm)");
  gen_cmd->add_option("--seed", gen.seed, "Seed (decimal or 0x-hex)");
  gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser with sft, sudo or dpo");
  train_cmd->add_option("--data", tr.data, "Dataset file")->required();
  train_cmd->add_option("--method", tr.method)->check(CLI::IsMember({"sft", "sudo", "dpo"}));
  train_cmd->add_option("--downgrade", tr.downgrade)
      ->check(CLI::IsMember({"random-image", "blur", "grid"}));
  train_cmd->add_option("--blur-factor", tr.blur_factor);
  train_cmd->add_option("--grid-count", tr.grid_count);
  train_cmd->add_option("--c", tr.c, "Preference scale factor C");
  train_cmd->add_option("--lambda1", tr.lambda1, "MSE weight");
  train_cmd->add_option("--lambda2", tr.lambda2, "Preference weight");
  train_cmd->add_option("--steps", tr.steps);
  train_cmd->add_option("--batch", tr.batch);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--warmup-frac", tr.warmup_frac);
  train_cmd->add_option("--weight-decay", tr.weight_decay);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_flag("--share-noise", tr.share_noise, "Reuse the winner noise for the loser");
  train_cmd->add_flag("--allow-same-label", tr.allow_same_label,
                      "Let random-image losers share the winner's label");
  train_cmd->add_option("--hidden", tr.hidden, "Hidden widths, comma separated");
  train_cmd->add_option("--time-dim", tr.time_dim);
  train_cmd->add_option("--cond-dim", tr.cond_dim);
  train_cmd->add_option("--timesteps", tr.timesteps);
  train_cmd->add_option("--pairs", tr.pairs, "Ranked-pair CSV for dpo");
  train_cmd->add_option("--dpo-pairs", tr.dpo_pairs, "Ranked pairs to generate when --pairs is absent");
  train_cmd->add_option("--init-ckpt", tr.init_ckpt, "Fine-tune from this checkpoint (also the reference)");
  train_cmd->add_option("--out-ckpt", tr.out_ckpt)->required();
  train_cmd->add_option("--metrics", tr.metrics)->required();

  SampleArgs sm;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample_cmd->add_option("--ckpt", sm.ckpt)->required();
  sample_cmd->add_option("--cond", sm.cond);
  sample_cmd->add_option("--n", sm.n);
  sample_cmd->add_option("--seed", sm.seed);
  sample_cmd->add_option("--out", sm.out)->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Paired-seed win rate of checkpoint A against B");
  eval_cmd->add_option("--ckpt-a", ev.ckpt_a)->required();
  eval_cmd->add_option("--ckpt-b", ev.ckpt_b)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--n-per-cond", ev.n_per_cond);
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--report", ev.report);

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Downgrade-strategy ablation against sft");
  ablate_cmd->add_option("--data", ab.data)->required();
  ablate_cmd->add_option("--steps", ab.steps);
  ablate_cmd->add_option("--batch", ab.batch);
  ablate_cmd->add_option("--seeds", ab.seeds, "Comma-separated seeds");
  ablate_cmd->add_option("--n-per-cond", ab.n_per_cond);
  ablate_cmd->add_flag("--share-noise", ab.share_noise);
  ablate_cmd->add_flag("--no-mse-row", ab.no_mse, "Add the lambda1 = 0 random-image row");
  ablate_cmd->add_option("--hidden", ab.hidden);
  ablate_cmd->add_option("--out", ab.out)->required();

  GradCheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad_cmd->add_option("--seed", gc.seed);
  grad_cmd->set_help_flag("--help", "Print this help message and exit");
  grad_cmd->add_option("--h", gc.h, "Finite-difference step");
  grad_cmd->add_option("--tol", gc.tol);
  grad_cmd->add_option("--method", gc.method)->check(CLI::IsMember({"sft", "sudo", "dpo"}));
  grad_cmd->add_option("--lambda1", gc.lambda1);
  grad_cmd->add_option("--lambda2", gc.lambda2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, out);
    if (*train_cmd) return run_train(tr, out);
    if (*sample_cmd) return run_sample(sm, out);
    if (*eval_cmd) return run_eval(ev, out);
    if (*ablate_cmd) return run_ablate(ab, out);
    if (*grad_cmd) return run_gradcheck(gc, out);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sudo
