#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sudo/data.hpp"
#include "sudo/training.hpp"

namespace sudo {

/// How well x0 matches condition c: the mixture posterior p(c | x0) for
/// vector data, (corr(x0, template_c) + 1) / 2 for grid data.
double alignment_score(std::span<const double> x0, std::size_t c, const DataSpec& spec);

/// Noise stream shared by both models for replicate i of condition c.
Rng eval_stream(std::uint64_t seed, std::size_t c, std::size_t i);

struct WinCount {
  double wins = 0.0;  // ties count 0.5
  std::size_t n = 0;
  double win_rate() const { return n == 0 ? 0.0 : 100.0 * wins / static_cast<double>(n); }
};

/// Pairwise comparison of equal-length score lists.
WinCount count_wins(std::span<const double> scores_a, std::span<const double> scores_b);

struct EvalReport {
  std::size_t n_pairs = 0;
  std::size_t n_per_condition = 0;
  std::uint64_t seed = 0;
  std::vector<double> mean_score_a;  // per condition
  std::vector<double> mean_score_b;
  double overall_a = 0.0;
  double overall_b = 0.0;
  double wins_a = 0.0;
  double win_rate_a = 0.0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// Samples both checkpoints from identical noise streams for every
/// (condition, replicate), scores each output and counts A's wins.
EvalReport paired_eval(const Checkpoint& a, const Checkpoint& b, const DataSpec& spec,
                       std::size_t n_per_condition, std::uint64_t seed);

/// Oracle-ranked pairs for dpo: each winner record is paired with a random
/// other record and the two are ordered by alignment under the winner's label.
std::vector<RankedPair> make_ranked_pairs(const Dataset& dataset, std::size_t count,
                                          std::uint64_t seed);
std::string encode_ranked_pairs(const std::vector<RankedPair>& pairs);
std::vector<RankedPair> decode_ranked_pairs(const std::string& csv);

enum class AblationRowKind { sft, blur, random_grid, random_image, random_image_no_mse };

std::string_view to_string(AblationRowKind kind);

struct AblationRow {
  AblationRowKind kind = AblationRowKind::sft;
  bool applicable = true;
  double mean_alignment = 0.0;   // median over seeds
  double win_rate_vs_sft = 0.0;  // median over seeds
  std::vector<double> win_rates;  // per seed
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;

  const AblationRow& row(AblationRowKind kind) const;
  std::string to_csv() const;
};

struct AblationOptions {
  std::size_t n_per_condition = 250;
  std::uint64_t eval_seed = 0xE7A1ULL;
  /// Adds the "w/o MSE" row: random-image with lambda1 = 0.
  bool include_no_mse = false;
};

/// Trains sft plus one sudo model per applicable downgrade row for every
/// seed and evaluates each against that seed's sft model. Blur and grid rows
/// are marked inapplicable on vector data.
AblationTable run_ablation(const Dataset& dataset, const TrainConfig& base,
                           const std::vector<std::uint64_t>& seeds,
                           const AblationOptions& options = {});

double median(std::vector<double> values);

/// Command-line entry point. Exit codes: 0 ok, 1 usage, 2 I/O or format,
/// 3 numeric failure, 4 gradcheck tolerance exceeded.
int cli_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sudo
