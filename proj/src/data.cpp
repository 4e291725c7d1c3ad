#include "sudo/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sudo/error.hpp"
#include "sudo/io.hpp"
#include "sudo/rng.hpp"

namespace sudo {
namespace {

constexpr char kMagic[4] = {'S', 'U', 'D', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kMaxGridConditions = 4;

}  // namespace

GmSpec GmSpec::make(std::size_t num_conditions, std::size_t dim, double radius, double sigma) {
  GmSpec spec;
  spec.num_conditions = num_conditions;
  spec.dim = dim;
  spec.radius = radius;
  spec.sigma = sigma;
  if (dim == 0 || num_conditions == 0) throw ConfigError("mixture needs K >= 1 and d >= 1");
  if (dim != 2 && num_conditions > 2 * dim) {
    throw ConfigError("axis-aligned mixture supports at most 2d components");
  }
  for (std::size_t k = 0; k < num_conditions; ++k) {
    std::vector<double> mean(dim, 0.0);
    if (dim == 2) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(num_conditions);
      mean[0] = radius * std::cos(angle);
      mean[1] = radius * std::sin(angle);
    } else {
      mean[k % dim] = k < dim ? radius : -radius;
    }
    spec.means.push_back(std::move(mean));
  }
  spec.validate();
  return spec;
}

void GmSpec::validate() const {
  if (num_conditions == 0 || dim == 0) throw ConfigError("mixture needs K >= 1 and d >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("mixture sigma must be > 0");
  if (means.size() != num_conditions) throw ConfigError("mixture needs one mean per component");
  for (const auto& m : means) {
    if (m.size() != dim) throw ConfigError("mixture mean has wrong dimension");
  }
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      if (means[a] == means[b]) throw ConfigError("mixture means must be distinct");
    }
  }
}

void Dataset::validate() const {
  if (records.empty()) throw ConfigError("dataset must contain at least one record");
  if (num_conditions == 0 || dim == 0) throw ConfigError("dataset needs K >= 1 and dim >= 1");
  const std::size_t len = value_dim();
  for (const auto& r : records) {
    if (r.label >= num_conditions) throw ConfigError("record label out of range");
    if (r.values.size() != len) throw ConfigError("record has wrong length");
  }
}

Dataset gen_gaussian_mixture(const GmSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  Dataset ds;
  ds.kind = DatasetKind::vector;
  ds.dim = spec.dim;
  ds.num_conditions = spec.num_conditions;
  ds.spec = spec;
  ds.records.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    r.label = static_cast<std::uint32_t>(rng.uniform_index(spec.num_conditions));
    r.values.resize(spec.dim);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      r.values[j] = spec.means[r.label][j] + spec.sigma * rng.gaussian();
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::vector<double> grid_template(std::size_t label, std::size_t side) {
  std::vector<double> img(side * side, 0.0);
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      double v = 0.0;
      switch (label) {
        case 0: v = static_cast<double>(i % 2); break;
        case 1: v = static_cast<double>(j % 2); break;
        case 2: v = static_cast<double>((i + j) % 2); break;
        case 3: {
          const bool inside = i >= side / 4 && i < side - side / 4 && j >= side / 4 &&
                              j < side - side / 4;
          v = inside ? 1.0 : 0.0;
          break;
        }
        default: throw ConfigError("grid pattern label must be < 4");
      }
      img[i * side + j] = v;
    }
  }
  return img;
}

Dataset gen_pattern_grid(std::size_t num_conditions, std::size_t side, std::size_t n,
                         double noise_sigma, std::uint64_t seed) {
  if (num_conditions == 0 || num_conditions > kMaxGridConditions) {
    throw ConfigError("grid datasets support 1 to 4 pattern classes");
  }
  if (side < 4) throw ConfigError("grid side must be >= 4");
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("grid noise sigma must be >= 0");
  std::vector<std::vector<double>> templates;
  for (std::size_t k = 0; k < num_conditions; ++k) templates.push_back(grid_template(k, side));

  Dataset ds;
  ds.kind = DatasetKind::grid;
  ds.dim = side;
  ds.num_conditions = num_conditions;
  ds.spec = GridSpec{num_conditions, side, noise_sigma};
  ds.records.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    r.label = static_cast<std::uint32_t>(rng.uniform_index(num_conditions));
    r.values = templates[r.label];
    if (noise_sigma > 0.0) {
      for (double& v : r.values) v += noise_sigma * rng.gaussian();
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::vector<double> posterior(const GmSpec& spec, std::span<const double> x) {
  if (x.size() != spec.dim) throw InputError("posterior input has wrong dimension");
  const std::size_t K = spec.num_conditions;
  std::vector<double> logp(K);
  const double inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t k = 0; k < K; ++k) {
    double dist2 = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double diff = x[j] - spec.means[k][j];
      dist2 += diff * diff;
    }
    logp[k] = -dist2 * inv_two_var;  // uniform weights cancel
  }
  const double peak = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& v : logp) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : logp) v /= total;
  return logp;
}

double normalized_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InputError("correlation needs equal, non-empty inputs");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::string encode_dataset(const Dataset& dataset) {
  dataset.validate();
  ByteWriter spec_block;
  if (dataset.kind == DatasetKind::vector) {
    const auto& gm = std::get<GmSpec>(dataset.spec);
    spec_block.put_f64(gm.radius);
    spec_block.put_f64(gm.sigma);
    for (const auto& m : gm.means) {
      for (double v : m) spec_block.put_f64(v);
    }
  } else {
    spec_block.put_f64(std::get<GridSpec>(dataset.spec).noise_sigma);
  }

  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put_u32(kVersion);
  w.put_u8(static_cast<std::uint8_t>(dataset.kind));
  w.put_u32(static_cast<std::uint32_t>(dataset.dim));
  w.put_u32(static_cast<std::uint32_t>(dataset.num_conditions));
  w.put_u64(dataset.records.size());
  w.put_u32(static_cast<std::uint32_t>(spec_block.size()));
  w.put_bytes(spec_block.bytes());
  for (const auto& r : dataset.records) {
    w.put_u32(r.label);
    for (double v : r.values) w.put_f64(v);
  }
  return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad dataset magic", 0);
  }
  if (r.get_u32() != kVersion) throw FormatError("unsupported dataset version", 4);
  Dataset ds;
  const std::size_t kind_offset = r.offset();
  const std::uint8_t kind = r.get_u8();
  if (kind > 1) throw FormatError("unknown dataset kind", kind_offset);
  ds.kind = static_cast<DatasetKind>(kind);
  ds.dim = r.get_u32();
  ds.num_conditions = r.get_u32();
  const std::size_t n_offset = r.offset();
  const std::uint64_t n = r.get_u64();
  if (n == 0) throw FormatError("dataset has no records", n_offset);
  if (ds.dim == 0 || ds.num_conditions == 0) r.fail("dataset header has zero dimension or K");

  const std::uint32_t spec_len = r.get_u32();
  const std::size_t spec_start = r.offset();
  if (ds.kind == DatasetKind::vector) {
    GmSpec gm;
    gm.num_conditions = ds.num_conditions;
    gm.dim = ds.dim;
    if (spec_len != 8 * (2 + ds.num_conditions * ds.dim)) r.fail("mixture spec block has wrong length");
    gm.radius = r.get_f64();
    gm.sigma = r.get_f64();
    gm.means.assign(ds.num_conditions, std::vector<double>(ds.dim));
    for (auto& m : gm.means) {
      for (double& v : m) v = r.get_f64();
    }
    try {
      gm.validate();
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), spec_start);
    }
    ds.spec = std::move(gm);
  } else {
    if (spec_len != 8) r.fail("grid spec block has wrong length");
    ds.spec = GridSpec{ds.num_conditions, ds.dim, r.get_f64()};
  }

  const std::size_t len = ds.value_dim();
  if (r.remaining() / (4 + 8 * len) < n) r.fail("truncated payload: too few records");
  ds.records.resize(n);
  for (auto& rec : ds.records) {
    const std::size_t at = r.offset();
    rec.label = r.get_u32();
    if (rec.label >= ds.num_conditions) throw FormatError("record label out of range", at);
    rec.values.resize(len);
    for (double& v : rec.values) v = r.get_f64();
  }
  if (r.remaining() != 0) r.fail("trailing bytes after records");
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  atomic_write(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace sudo
