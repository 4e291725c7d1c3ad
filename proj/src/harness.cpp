#include "sudo/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>

#include "json.hpp"

#include "sudo/diffusion.hpp"
#include "sudo/error.hpp"
#include "sudo/rng.hpp"

namespace sudo {

double alignment_score(std::span<const double> x0, std::size_t c, const DataSpec& spec) {
  if (const auto* gm = std::get_if<GmSpec>(&spec)) {
    if (c >= gm->num_conditions) throw InputError("condition out of range");
    return posterior(*gm, x0)[c];
  }
  const auto& grid = std::get<GridSpec>(spec);
  if (c >= grid.num_conditions) throw InputError("condition out of range");
  if (x0.size() != grid.side * grid.side) throw InputError("sample is not side x side");
  const auto tmpl = grid_template(c, grid.side);
  return (normalized_correlation(x0, tmpl) + 1.0) / 2.0;
}

Rng eval_stream(std::uint64_t seed, std::size_t c, std::size_t i) {
  return Rng(seed).child(c).child(i);
}

WinCount count_wins(std::span<const double> scores_a, std::span<const double> scores_b) {
  if (scores_a.size() != scores_b.size()) throw InputError("score lists differ in length");
  WinCount wc;
  wc.n = scores_a.size();
  for (std::size_t i = 0; i < scores_a.size(); ++i) {
    if (scores_a[i] > scores_b[i]) {
      wc.wins += 1.0;
    } else if (scores_a[i] == scores_b[i]) {
      wc.wins += 0.5;
    }
  }
  return wc;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_pairs"] = n_pairs;
  j["n_per_condition"] = n_per_condition;
  j["seed"] = seed;
  j["mean_score_a"] = mean_score_a;
  j["mean_score_b"] = mean_score_b;
  j["overall_a"] = overall_a;
  j["overall_b"] = overall_b;
  j["wins_a"] = wins_a;
  j["win_rate_a"] = win_rate_a;
  return j.dump();
}

EvalReport EvalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.n_pairs = j.at("n_pairs").get<std::size_t>();
  r.n_per_condition = j.at("n_per_condition").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.mean_score_a = j.at("mean_score_a").get<std::vector<double>>();
  r.mean_score_b = j.at("mean_score_b").get<std::vector<double>>();
  r.overall_a = j.at("overall_a").get<double>();
  r.overall_b = j.at("overall_b").get<double>();
  r.wins_a = j.at("wins_a").get<double>();
  r.win_rate_a = j.at("win_rate_a").get<double>();
  return r;
}

EvalReport paired_eval(const Checkpoint& a, const Checkpoint& b, const DataSpec& spec,
                       std::size_t n_per_condition, std::uint64_t seed) {
  if (n_per_condition == 0) throw ConfigError("need at least one replicate per condition");
  if (a.arch.data_dim != b.arch.data_dim || a.arch.num_conditions != b.arch.num_conditions) {
    throw ConfigError("checkpoints differ in data dimension or condition count");
  }
  const std::size_t K = a.arch.num_conditions;
  const std::size_t spec_k = std::visit([](const auto& s) { return s.num_conditions; }, spec);
  if (spec_k != K) throw ConfigError("checkpoint condition count does not match the dataset");

  const Schedule sched_a = a.schedule();
  const Schedule sched_b = b.schedule();
  EvalReport report;
  report.n_per_condition = n_per_condition;
  report.seed = seed;
  report.mean_score_a.assign(K, 0.0);
  report.mean_score_b.assign(K, 0.0);
  std::vector<double> scores_a, scores_b;
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < n_per_condition; ++i) {
      Rng rng_a = eval_stream(seed, c, i);
      Rng rng_b = rng_a;
      const double sa = alignment_score(sample(a.params, sched_a, c, rng_a), c, spec);
      const double sb = alignment_score(sample(b.params, sched_b, c, rng_b), c, spec);
      scores_a.push_back(sa);
      scores_b.push_back(sb);
      report.mean_score_a[c] += sa;
      report.mean_score_b[c] += sb;
    }
    report.overall_a += report.mean_score_a[c];
    report.overall_b += report.mean_score_b[c];
    report.mean_score_a[c] /= static_cast<double>(n_per_condition);
    report.mean_score_b[c] /= static_cast<double>(n_per_condition);
  }
  const WinCount wc = count_wins(scores_a, scores_b);
  report.n_pairs = wc.n;
  report.overall_a /= static_cast<double>(wc.n);
  report.overall_b /= static_cast<double>(wc.n);
  report.wins_a = wc.wins;
  report.win_rate_a = wc.win_rate();
  return report;
}

std::vector<RankedPair> make_ranked_pairs(const Dataset& dataset, std::size_t count,
                                          std::uint64_t seed) {
  dataset.validate();
  if (dataset.size() < 2) throw InputError("ranked pairs need at least two records");
  Rng rng(seed);
  std::vector<RankedPair> pairs;
  pairs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t first = rng.uniform_index(dataset.size());
    std::size_t second = rng.uniform_index(dataset.size() - 1);
    if (second >= first) ++second;
    const std::size_t c = dataset.records[first].label;
    const double s_first = alignment_score(dataset.records[first].values, c, dataset.spec);
    const double s_second = alignment_score(dataset.records[second].values, c, dataset.spec);
    RankedPair p{c, first, second};
    if (s_second > s_first) std::swap(p.winner_index, p.loser_index);
    pairs.push_back(p);
  }
  return pairs;
}

std::string encode_ranked_pairs(const std::vector<RankedPair>& pairs) {
  std::string csv = "condition,winner_index,loser_index\n";
  for (const auto& p : pairs) {
    csv += std::to_string(p.condition) + ',' + std::to_string(p.winner_index) + ',' +
           std::to_string(p.loser_index) + '\n';
  }
  return csv;
}

std::vector<RankedPair> decode_ranked_pairs(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "condition,winner_index,loser_index") {
    throw FormatError("ranked-pair file has a bad header", 0);
  }
  std::vector<RankedPair> pairs;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      RankedPair p;
      char c1 = 0, c2 = 0;
      std::istringstream row(line);
      if (!(row >> p.condition >> c1 >> p.winner_index >> c2 >> p.loser_index) || c1 != ',' ||
          c2 != ',') {
        throw FormatError("malformed ranked-pair row", offset);
      }
      pairs.push_back(p);
    }
    offset += line.size() + 1;
  }
  if (pairs.empty()) throw FormatError("ranked-pair file has no rows", offset);
  return pairs;
}

std::string_view to_string(AblationRowKind kind) {
  switch (kind) {
    case AblationRowKind::sft: return "sft";
    case AblationRowKind::blur: return "blur";
    case AblationRowKind::random_grid: return "random_grid";
    case AblationRowKind::random_image: return "random_image";
    case AblationRowKind::random_image_no_mse: return "random_image_no_mse";
  }
  return "?";
}

const AblationRow& AblationTable::row(AblationRowKind kind) const {
  for (const auto& r : rows) {
    if (r.kind == kind) return r;
  }
  throw InputError("ablation table has no row '" + std::string(to_string(kind)) + "'");
}

std::string AblationTable::to_csv() const {
  std::string csv = "row,applicable,mean_alignment,win_rate_vs_sft,win_rates_per_seed\n";
  char buf[64];
  for (const auto& r : rows) {
    csv += std::string(to_string(r.kind)) + ',' + (r.applicable ? "1" : "0") + ',';
    if (r.applicable) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.mean_alignment, r.win_rate_vs_sft);
      csv += buf;
      for (std::size_t i = 0; i < r.win_rates.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.17g", i ? ";" : "", r.win_rates[i]);
        csv += buf;
      }
    } else {
      csv += ",,";
    }
    csv += '\n';
  }
  return csv;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

AblationTable run_ablation(const Dataset& dataset, const TrainConfig& base,
                           const std::vector<std::uint64_t>& seeds,
                           const AblationOptions& options) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const bool grid = dataset.kind == DatasetKind::grid;

  AblationTable table;
  table.seeds = seeds;
  table.rows.push_back({AblationRowKind::sft, true, 0.0, 0.0, {}});
  table.rows.push_back({AblationRowKind::blur, grid, 0.0, 0.0, {}});
  table.rows.push_back({AblationRowKind::random_grid, grid, 0.0, 0.0, {}});
  table.rows.push_back({AblationRowKind::random_image, true, 0.0, 0.0, {}});
  if (options.include_no_mse) {
    table.rows.push_back({AblationRowKind::random_image_no_mse, true, 0.0, 0.0, {}});
  }

  std::vector<std::vector<double>> alignments(table.rows.size());
  for (std::uint64_t seed : seeds) {
    TrainConfig sft_cfg = base;
    sft_cfg.seed = seed;
    sft_cfg.loss.method = Method::sft;
    const Checkpoint sft = train_model(sft_cfg, dataset).checkpoint;
    const std::uint64_t eval_seed = derive_seed(options.eval_seed, seed);

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      AblationRow& row = table.rows[r];
      if (!row.applicable) continue;
      EvalReport report;
      if (row.kind == AblationRowKind::sft) {
        report = paired_eval(sft, sft, dataset.spec, options.n_per_condition, eval_seed);
      } else {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.loss.method = Method::sudo;
        switch (row.kind) {
          case AblationRowKind::blur: cfg.downgrade.kind = DowngradeKind::blur; break;
          case AblationRowKind::random_grid: cfg.downgrade.kind = DowngradeKind::random_grid; break;
          case AblationRowKind::random_image_no_mse:
            cfg.loss.lambda1 = 0.0;
            cfg.downgrade.kind = DowngradeKind::random_image;
            break;
          default: cfg.downgrade.kind = DowngradeKind::random_image; break;
        }
        const Checkpoint model = train_model(cfg, dataset).checkpoint;
        report = paired_eval(model, sft, dataset.spec, options.n_per_condition, eval_seed);
      }
      row.win_rates.push_back(report.win_rate_a);
      alignments[r].push_back(report.overall_a);
    }
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    AblationRow& row = table.rows[r];
    if (!row.applicable) continue;
    row.win_rate_vs_sft = median(row.win_rates);
    row.mean_alignment = median(alignments[r]);
  }
  return table;
}

}  // namespace sudo
