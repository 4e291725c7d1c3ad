#include "sudo/rng.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "sudo/error.hpp"

namespace sudo {

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw InputError("uniform_index needs n > 0");
  auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

double Rng::gaussian() {
  if (cached_) {
    double z = *cached_;
    cached_.reset();
    return z;
  }
  double u1 = uniform01();
  const double u2 = uniform01();
  if (u1 == 0.0) u1 = 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

void Rng::fill_gaussian(std::span<double> out) {
  for (double& v : out) v = gaussian();
}

std::vector<double> Rng::gaussian_vector(std::size_t n) {
  std::vector<double> out(n);
  fill_gaussian(out);
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
  Rng r(seed ^ label);
  return r.next_u64();
}

std::uint64_t parse_seed(std::string_view text) {
  int base = 10;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    text.remove_prefix(2);
    base = 16;
  }
  std::uint64_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value, base);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw InputError("invalid seed '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace sudo
