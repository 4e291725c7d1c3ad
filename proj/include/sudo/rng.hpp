#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace sudo {

/// First splitmix64 output for seed `seed ^ label`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label);

/// Seedable splitmix64 stream with a Box-Muller normal generator.
///
/// The output sequence depends only on the seed, so every run, downgrade choice
/// and evaluation can be replayed bit-for-bit on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Top 53 bits scaled by 2^-53, in [0, 1).
  double uniform01();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Standard normal. Draws come in Box-Muller pairs; the second of each pair
  /// is cached and returned by the following call.
  double gaussian();

  void fill_gaussian(std::span<double> out);
  std::vector<double> gaussian_vector(std::size_t n);

  /// Independent stream labelled by `label`; does not advance this stream.
  Rng child(std::uint64_t label) const { return Rng(derive_seed(state_, label)); }

  std::uint64_t state() const noexcept { return state_; }
  const std::optional<double>& cached_gaussian() const noexcept { return cached_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t state_;
  std::optional<double> cached_;
};

/// Parses a decimal or 0x-prefixed hexadecimal seed. Throws InputError.
std::uint64_t parse_seed(std::string_view text);

}  // namespace sudo
