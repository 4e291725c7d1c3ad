#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "sudo/data.hpp"
#include "sudo/error.hpp"
#include "sudo/harness.hpp"
#include "sudo/io.hpp"
#include "sudo/training.hpp"

using namespace sudo;
namespace fs = std::filesystem;

namespace {

Checkpoint quick_model(const Dataset& data, Method m, std::uint64_t seed, std::size_t steps = 60) {
  TrainConfig cfg;
  cfg.loss.method = m;
  cfg.steps = steps;
  cfg.batch_size = 16;
  cfg.hidden = {16, 16};
  cfg.timesteps = 20;
  cfg.seed = seed;
  return train_model(cfg, data).checkpoint;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "sudo_diffusion");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "sudo_cli_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("alignment score") {
  const GmSpec sep = GmSpec::make(4, 2, 4.0, 0.5);
  CHECK(alignment_score(sep.means[2], 2, sep) >= 1.0 - 1e-10);
  const GmSpec two = GmSpec::make(2, 2);
  CHECK(alignment_score(std::vector<double>{0.0, 0.0}, 1, two) == doctest::Approx(0.5).epsilon(1e-12));
  GridSpec g;
  CHECK(alignment_score(grid_template(3, 8), 3, g) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(alignment_score(grid_template(0, 8), 1, g) < 0.75);
}

TEST_CASE("win counting") {
  const std::vector<double> a{0.9, 0.2, 0.6}, b{0.5, 0.2, 0.7};
  const WinCount w = count_wins(a, b);
  CHECK(w.wins == 1.5);
  CHECK(w.win_rate() == 50.0);
  CHECK(count_wins(std::vector<double>{2, 3}, std::vector<double>{1, 1}).win_rate() == 100.0);
  CHECK(count_wins(b, a).win_rate() + w.win_rate() == 100.0);
}

TEST_CASE("paired evaluation") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(3, 2), 300, 1);
  const Checkpoint a = quick_model(gm, Method::sft, 1);
  const Checkpoint b = quick_model(gm, Method::sft, 2);
  const EvalReport same = paired_eval(a, a, gm.spec, 20, 5);
  CHECK(same.win_rate_a == 50.0);
  CHECK(same.n_pairs == 60);
  CHECK(same.overall_a == same.overall_b);

  const EvalReport ab = paired_eval(a, b, gm.spec, 20, 5);
  const EvalReport ba = paired_eval(b, a, gm.spec, 20, 5);
  CHECK(ab.win_rate_a + ba.win_rate_a == 100.0);
  CHECK(ab.win_rate_a == paired_eval(a, b, gm.spec, 20, 5).win_rate_a);

  // replicate noise comes only from (seed, c, i)
  Rng s1 = eval_stream(5, 1, 3), s2 = eval_stream(5, 1, 3);
  CHECK(sample(a.params, a.schedule(), 1, s1) == sample(a.params, a.schedule(), 1, s2));

  const Dataset other = gen_gaussian_mixture(GmSpec::make(4, 2), 50, 1);
  const Checkpoint c = quick_model(other, Method::sft, 1, 2);
  CHECK_THROWS_AS(paired_eval(a, c, gm.spec, 5, 1), ConfigError);
}

TEST_CASE("report json round trip") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(2, 2), 100, 3);
  const Checkpoint a = quick_model(gm, Method::sft, 3, 10);
  const EvalReport rep = paired_eval(a, a, gm.spec, 5, 9);
  const std::string text = rep.to_json();
  CHECK(EvalReport::from_json(text).to_json() == text);
  CHECK(text.find("\"win_rate_a\"") != std::string::npos);
}

TEST_CASE("ranked pairs") {
  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 100, 4);
  const auto pairs = make_ranked_pairs(gm, 50, 1);
  CHECK(pairs.size() == 50);
  for (const RankedPair& p : pairs) {
    CHECK(p.winner_index != p.loser_index);
    CHECK(alignment_score(gm.records[p.winner_index].values, p.condition, gm.spec) >=
          alignment_score(gm.records[p.loser_index].values, p.condition, gm.spec));
  }
  CHECK(decode_ranked_pairs(encode_ranked_pairs(pairs)) == pairs);
  CHECK_THROWS(decode_ranked_pairs("condition,winner_index,loser_index\n1,x,2\n"));
}

TEST_CASE("ablation table shape and determinism") {
  const Dataset grid = gen_pattern_grid(4, 8, 80, 0.1, 2);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 4;
  cfg.hidden = {8};
  cfg.timesteps = 5;
  AblationOptions opt;
  opt.n_per_condition = 2;
  const AblationTable t = run_ablation(grid, cfg, {1, 2}, opt);
  CHECK(t.rows.size() == 4);
  CHECK(t.row(AblationRowKind::sft).win_rate_vs_sft == 50.0);
  for (const auto& r : t.rows) {
    CHECK(r.applicable);
    CHECK(r.win_rates.size() == 2);
  }
  CHECK(run_ablation(grid, cfg, {1, 2}, opt).to_csv() == t.to_csv());

  const Dataset gm = gen_gaussian_mixture(GmSpec::make(4, 2), 80, 2);
  const AblationTable v = run_ablation(gm, cfg, {1}, opt);
  CHECK_FALSE(v.row(AblationRowKind::blur).applicable);
  CHECK_FALSE(v.row(AblationRowKind::random_grid).applicable);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0}) == 2.5);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch_dir();
  const std::string data = (dir / "gm.sud").string();
  const std::string ck = (dir / "m.sudc").string();
  const std::string metrics = (dir / "m.csv").string();

  CliResult r = run({"gen-data", "--kind", "gm", "--k", "3", "--d", "2", "--n", "200", "--seed", "0x7",
                     "--out", data});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"command\":\"gen-data\"") != std::string::npos);

  r = run({"train", "--data", data, "--method", "sudo", "--steps", "5", "--batch", "4", "--hidden",
           "8,8", "--out-ckpt", ck, "--metrics", metrics});
  CHECK(r.code == 0);
  CHECK(fs::exists(ck));
  CHECK(!fs::exists(ck + ".tmp"));

  r = run({"train", "--data", data, "--bogus", "1", "--out-ckpt", ck, "--metrics", metrics});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  CHECK(r.out.empty());

  const std::string corrupt = (dir / "bad.sud").string();
  std::string bytes = read_file(data);
  bytes[0] = 'Z';
  atomic_write(corrupt, bytes);
  r = run({"train", "--data", corrupt, "--out-ckpt", ck, "--metrics", metrics});
  CHECK(r.code == 2);
  CHECK(r.err.find("offset 0") != std::string::npos);

  r = run({"train", "--data", (dir / "missing.sud").string(), "--out-ckpt", ck, "--metrics", metrics});
  CHECK(r.code == 2);

  r = run({"gradcheck", "--seed", "1", "--tol", "1e-4"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_err") != std::string::npos);
  r = run({"gradcheck", "--seed", "1", "--tol", "1e-300"});
  CHECK(r.code == 4);

  const std::string samples = (dir / "s.csv").string();
  r = run({"sample", "--ckpt", ck, "--cond", "1", "--n", "3", "--seed", "2", "--out", samples});
  CHECK(r.code == 0);
  std::istringstream lines(read_file(samples));
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    if (rows > 0) CHECK(line.rfind("1,", 0) == 0);
    ++rows;
  }
  CHECK(rows == 4);

  r = run({"sample", "--ckpt", ck, "--cond", "9", "--out", samples});
  CHECK(r.code == 1);

  const std::string report = (dir / "r.json").string();
  r = run({"eval", "--ckpt-a", ck, "--ckpt-b", ck, "--data", data, "--n-per-cond", "4", "--report", report});
  CHECK(r.code == 0);
  CHECK(EvalReport::from_json(read_file(report)).win_rate_a == 50.0);

  fs::remove_all(dir);
}

}
