#include "sudo/downgrade.hpp"

#include <string>

#include "sudo/error.hpp"

namespace sudo {
namespace {

void check_grid_shape(std::span<const double> image, std::size_t side, std::size_t divisor,
                      const char* what) {
  if (image.size() != side * side) throw InputError("image is not side x side");
  if (divisor < 2) throw InputError(std::string(what) + " must be >= 2");
  if (side % divisor != 0) {
    throw InputError("side " + std::to_string(side) + " not divisible by " + what + " " +
                     std::to_string(divisor));
  }
}

}  // namespace

std::string_view to_string(DowngradeKind kind) {
  switch (kind) {
    case DowngradeKind::random_image: return "random-image";
    case DowngradeKind::blur: return "blur";
    case DowngradeKind::random_grid: return "grid";
  }
  return "?";
}

DowngradeKind parse_downgrade_kind(std::string_view text) {
  if (text == "random-image" || text == "random_image") return DowngradeKind::random_image;
  if (text == "blur") return DowngradeKind::blur;
  if (text == "grid" || text == "random-grid" || text == "random_grid") {
    return DowngradeKind::random_grid;
  }
  throw InputError("unknown downgrade strategy '" + std::string(text) + "'");
}

void DowngradeStrategy::check_compatible(const Dataset& dataset) const {
  switch (kind) {
    case DowngradeKind::random_image:
      if (dataset.size() < 2) throw ConfigError("random-image downgrade needs >= 2 records");
      return;
    case DowngradeKind::blur:
      if (dataset.kind != DatasetKind::grid) throw ConfigError("blur downgrade needs grid data");
      if (blur_factor < 2 || dataset.dim % blur_factor != 0) {
        throw ConfigError("blur factor must be >= 2 and divide the grid side");
      }
      return;
    case DowngradeKind::random_grid:
      if (dataset.kind != DatasetKind::grid) throw ConfigError("grid downgrade needs grid data");
      if (grid_count < 2 || dataset.dim % grid_count != 0) {
        throw ConfigError("grid count must be >= 2 and divide the grid side");
      }
      return;
  }
}

RandomImageChoice downgrade_random_image(const Dataset& dataset, std::size_t winner_index,
                                         Rng& rng, bool allow_same_label) {
  const std::size_t n = dataset.size();
  if (n < 2) throw InputError("no distinct sample available");
  if (winner_index >= n) throw InputError("winner index out of range");
  const auto winner_label = dataset.records[winner_index].label;
  std::size_t chosen = 0;
  for (std::size_t attempt = 0; attempt < n; ++attempt) {
    chosen = rng.uniform_index(n - 1);
    if (chosen >= winner_index) ++chosen;
    if (allow_same_label || dataset.records[chosen].label != winner_label) break;
  }
  return {dataset.records[chosen].values, chosen};
}

std::vector<double> downgrade_blur(std::span<const double> image, std::size_t side,
                                   std::size_t factor) {
  check_grid_shape(image, side, factor, "blur factor");
  std::vector<double> out(image.size());
  const double inv_area = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t bi = 0; bi < side; bi += factor) {
    for (std::size_t bj = 0; bj < side; bj += factor) {
      double sum = 0.0;
      for (std::size_t i = bi; i < bi + factor; ++i) {
        for (std::size_t j = bj; j < bj + factor; ++j) sum += image[i * side + j];
      }
      const double mean = sum * inv_area;
      for (std::size_t i = bi; i < bi + factor; ++i) {
        for (std::size_t j = bj; j < bj + factor; ++j) out[i * side + j] = mean;
      }
    }
  }
  return out;
}

std::vector<double> swap_grid_cells(std::span<const double> image, std::size_t side,
                                    std::size_t grid_count, std::size_t a, std::size_t b) {
  check_grid_shape(image, side, grid_count, "grid count");
  const std::size_t cells = grid_count * grid_count;
  if (a >= cells || b >= cells) throw InputError("grid cell index out of range");
  std::vector<double> out(image.begin(), image.end());
  const std::size_t cell = side / grid_count;
  const std::size_t ar = (a / grid_count) * cell, ac = (a % grid_count) * cell;
  const std::size_t br = (b / grid_count) * cell, bc = (b % grid_count) * cell;
  for (std::size_t i = 0; i < cell; ++i) {
    for (std::size_t j = 0; j < cell; ++j) {
      out[(ar + i) * side + ac + j] = image[(br + i) * side + bc + j];
      out[(br + i) * side + bc + j] = image[(ar + i) * side + ac + j];
    }
  }
  return out;
}

std::vector<double> downgrade_random_grid(std::span<const double> image, std::size_t side,
                                          std::size_t grid_count, Rng& rng) {
  check_grid_shape(image, side, grid_count, "grid count");
  const std::size_t cells = grid_count * grid_count;
  const std::size_t a = rng.uniform_index(cells);
  std::size_t b = rng.uniform_index(cells - 1);
  if (b >= a) ++b;
  return swap_grid_cells(image, side, grid_count, a, b);
}

PreferencePair make_pair(const Dataset& dataset, std::size_t winner_index,
                         const DowngradeStrategy& strategy, const Schedule& schedule, Rng& rng,
                         bool share_noise) {
  if (winner_index >= dataset.size()) throw InputError("winner index out of range");
  strategy.check_compatible(dataset);
  const Record& winner = dataset.records[winner_index];

  PreferencePair pair;
  pair.condition = winner.label;
  pair.x_w = winner.values;
  pair.strategy = strategy.kind;
  pair.t = 1 + rng.uniform_index(schedule.steps());
  pair.eps_w = rng.gaussian_vector(pair.x_w.size());
  switch (strategy.kind) {
    case DowngradeKind::random_image:
      pair.x_sl =
          downgrade_random_image(dataset, winner_index, rng, strategy.allow_same_label).values;
      break;
    case DowngradeKind::blur:
      pair.x_sl = downgrade_blur(winner.values, dataset.dim, strategy.blur_factor);
      break;
    case DowngradeKind::random_grid:
      pair.x_sl = downgrade_random_grid(winner.values, dataset.dim, strategy.grid_count, rng);
      break;
  }
  pair.eps_sl = share_noise ? pair.eps_w : rng.gaussian_vector(pair.x_w.size());
  return pair;
}

}  // namespace sudo
