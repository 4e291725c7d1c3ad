#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace sudo {

/// Isotropic Gaussian mixture with uniform weights. For d = 2 the means sit
/// on a circle of the given radius; otherwise they are +/- radius along the
/// coordinate axes (so K <= 2d).
struct GmSpec {
  std::size_t num_conditions = 4;
  std::size_t dim = 2;
  double radius = 4.0;
  double sigma = 0.5;
  std::vector<std::vector<double>> means;

  static GmSpec make(std::size_t num_conditions, std::size_t dim, double radius = 4.0,
                     double sigma = 0.5);
  void validate() const;
};

/// Binary pattern classes: 0 horizontal stripes, 1 vertical stripes,
/// 2 checkerboard, 3 centre square.
struct GridSpec {
  std::size_t num_conditions = 4;
  std::size_t side = 8;
  double noise_sigma = 0.1;
};

enum class DatasetKind : std::uint8_t { vector = 0, grid = 1 };

struct Record {
  std::uint32_t label = 0;
  std::vector<double> values;

  friend bool operator==(const Record&, const Record&) = default;
};

using DataSpec = std::variant<GmSpec, GridSpec>;

struct Dataset {
  DatasetKind kind = DatasetKind::vector;
  std::size_t dim = 0;  // d for vector data, side for grid data
  std::size_t num_conditions = 0;
  std::vector<Record> records;
  DataSpec spec;

  std::size_t size() const noexcept { return records.size(); }
  /// Length of each record's value vector (d, or side * side).
  std::size_t value_dim() const noexcept { return kind == DatasetKind::grid ? dim * dim : dim; }
  void validate() const;
};

Dataset gen_gaussian_mixture(const GmSpec& spec, std::size_t n, std::uint64_t seed);

Dataset gen_pattern_grid(std::size_t num_conditions, std::size_t side, std::size_t n,
                         double noise_sigma, std::uint64_t seed);

std::vector<double> grid_template(std::size_t label, std::size_t side);

/// p(c | x) for the mixture, normalised with log-sum-exp.
std::vector<double> posterior(const GmSpec& spec, std::span<const double> x);

/// Pearson correlation of two equal-length vectors; 0 when either is constant.
double normalized_correlation(std::span<const double> a, std::span<const double> b);

std::string encode_dataset(const Dataset& dataset);
/// Throws FormatError (with byte offset) on bad magic, version or truncation.
Dataset decode_dataset(std::string_view bytes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace sudo
