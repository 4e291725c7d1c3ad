#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sudo/data.hpp"
#include "sudo/diffusion.hpp"
#include "sudo/rng.hpp"

namespace sudo {

enum class DowngradeKind { random_image, blur, random_grid };

std::string_view to_string(DowngradeKind kind);
/// Accepts the CLI spellings random-image, blur and grid. Throws InputError.
DowngradeKind parse_downgrade_kind(std::string_view text);

/// How a losing sample is manufactured from a winner.
struct DowngradeStrategy {
  DowngradeKind kind = DowngradeKind::random_image;
  std::size_t blur_factor = 4;
  std::size_t grid_count = 8;
  /// random_image: accept a loser with the winner's own label.
  bool allow_same_label = false;

  /// Throws ConfigError when the strategy cannot act on `dataset`.
  void check_compatible(const Dataset& dataset) const;
};

/// Winner, self-generated loser, shared timestep and per-side noises.
struct PreferencePair {
  std::size_t condition = 0;
  std::vector<double> x_w;
  std::vector<double> x_sl;
  std::size_t t = 1;
  std::vector<double> eps_w;
  std::vector<double> eps_sl;
  DowngradeKind strategy = DowngradeKind::random_image;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct RandomImageChoice {
  std::vector<double> values;
  std::size_t index = 0;
};

/// Uniformly picks another record, retrying up to dataset-size times for one
/// whose label differs from the winner's. Throws InputError for n < 2.
RandomImageChoice downgrade_random_image(const Dataset& dataset, std::size_t winner_index,
                                         Rng& rng, bool allow_same_label = false);

/// Replaces each factor x factor block of a side x side image by its mean.
std::vector<double> downgrade_blur(std::span<const double> image, std::size_t side,
                                   std::size_t factor);

/// Splits the image into grid_count^2 cells and swaps two distinct cells.
std::vector<double> downgrade_random_grid(std::span<const double> image, std::size_t side,
                                          std::size_t grid_count, Rng& rng);

/// Swaps cells `a` and `b` (row-major cell numbering).
std::vector<double> swap_grid_cells(std::span<const double> image, std::size_t side,
                                    std::size_t grid_count, std::size_t a, std::size_t b);

/// Draws t ~ U{1..T} and eps_w, then builds the loser, then draws eps_sl (or
/// reuses eps_w when `share_noise`). The (t, eps_w) prefix matches what a
/// plain supervised step draws from the same stream.
PreferencePair make_pair(const Dataset& dataset, std::size_t winner_index,
                         const DowngradeStrategy& strategy, const Schedule& schedule, Rng& rng,
                         bool share_noise = false);

}  // namespace sudo
