#include "sudo/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sudo/error.hpp"
#include "sudo/rng.hpp"

namespace sudo {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// out = W * in + b, W row-major (out x in)
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> in,
            std::span<double> out) {
  const std::size_t n_in = in.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = w.data() + i * n_in;
    double acc = b[i];
    for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * in[j];
    out[i] = acc;
  }
}

void check_inputs(const Architecture& arch, std::span<const double> x_t, std::size_t c) {
  if (c >= arch.num_conditions) {
    throw InputError("condition " + std::to_string(c) + " out of range [0, " +
                     std::to_string(arch.num_conditions) + ")");
  }
  if (x_t.size() != arch.data_dim) {
    throw InputError("x_t has dimension " + std::to_string(x_t.size()) + ", expected " +
                     std::to_string(arch.data_dim));
  }
  for (double v : x_t) {
    if (!std::isfinite(v)) throw InputError("non-finite x_t");
  }
}

}  // namespace

void Architecture::validate() const {
  if (data_dim == 0 || num_conditions == 0 || time_dim == 0 || cond_dim == 0) {
    throw ConfigError("architecture widths must be >= 1");
  }
  if (time_dim % 2 != 0) throw ConfigError("time embedding width must be even");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be >= 1");
  }
}

std::size_t Architecture::layer_in(std::size_t layer) const {
  return layer == 0 ? input_dim() : hidden[layer - 1];
}

std::size_t Architecture::layer_out(std::size_t layer) const {
  return layer < hidden.size() ? hidden[layer] : data_dim;
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) n += layer_out(l) * (layer_in(l) + 1);
  return n + num_conditions * cond_dim;
}

DenoiserParams::DenoiserParams(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    layer_offsets_.push_back(offset);
    offset += arch_.layer_out(l) * (arch_.layer_in(l) + 1);
  }
  cond_offset_ = offset;
  values_.assign(arch_.param_count(), 0.0);
}

std::size_t DenoiserParams::bias_offset(std::size_t layer) const {
  return layer_offsets_[layer] + arch_.layer_out(layer) * arch_.layer_in(layer);
}

std::span<const double> DenoiserParams::weights(std::size_t layer) const {
  return std::span<const double>(values_).subspan(weight_offset(layer),
                                                  arch_.layer_out(layer) * arch_.layer_in(layer));
}

std::span<const double> DenoiserParams::bias(std::size_t layer) const {
  return std::span<const double>(values_).subspan(bias_offset(layer), arch_.layer_out(layer));
}

std::span<const double> DenoiserParams::cond_embedding(std::size_t c) const {
  return std::span<const double>(values_).subspan(cond_offset_ + c * arch_.cond_dim,
                                                  arch_.cond_dim);
}

bool DenoiserParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParamGrads::add_scaled(const ParamGrads& other, double scale) {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * other.values[i];
}

double ParamGrads::norm() const {
  double s = 0.0;
  for (double g : values) s += g * g;
  return std::sqrt(s);
}

DenoiserParams init_params(const Architecture& arch, std::uint64_t seed) {
  DenoiserParams params(arch);
  Rng rng(seed);
  auto values = params.values();
  const std::size_t last = arch.num_layers() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    const double fan_in = static_cast<double>(arch.layer_in(l));
    const double fan_out = static_cast<double>(arch.layer_out(l));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t n = arch.layer_out(l) * arch.layer_in(l);
    for (std::size_t i = 0; i < n; ++i) {
      values[params.weight_offset(l) + i] = (2.0 * rng.uniform01() - 1.0) * limit;
    }
  }
  for (std::size_t i = 0; i < arch.num_conditions * arch.cond_dim; ++i) {
    values[params.cond_offset() + i] = 0.02 * rng.gaussian();
  }
  return params;
}

void time_embedding_into(std::size_t t, std::span<double> out) {
  const std::size_t dim = out.size();
  if (dim % 2 != 0) throw ConfigError("time embedding width must be even");
  const std::size_t half = dim / 2;
  const double td = static_cast<double>(t);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[i] = std::sin(td * freq);
    out[half + i] = std::cos(td * freq);
  }
}

std::vector<double> time_embedding(std::size_t t, std::size_t dim) {
  std::vector<double> out(dim);
  time_embedding_into(t, out);
  return out;
}

void forward_traced(const DenoiserParams& params, std::span<const double> x_t, std::size_t t,
                    std::size_t c, ForwardTrace& trace) {
  const Architecture& arch = params.arch();
  check_inputs(arch, x_t, c);

  trace.condition = c;
  trace.input.resize(arch.input_dim());
  std::copy(x_t.begin(), x_t.end(), trace.input.begin());
  time_embedding_into(
      t, std::span<double>(trace.input).subspan(arch.data_dim, arch.time_dim));
  auto emb = params.cond_embedding(c);
  std::copy(emb.begin(), emb.end(), trace.input.begin() + arch.data_dim + arch.time_dim);

  const std::size_t n_hidden = arch.hidden.size();
  trace.pre.resize(n_hidden);
  trace.post.resize(n_hidden);
  std::span<const double> in = trace.input;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    trace.pre[l].resize(arch.hidden[l]);
    trace.post[l].resize(arch.hidden[l]);
    affine(params.weights(l), params.bias(l), in, trace.pre[l]);
    for (std::size_t i = 0; i < arch.hidden[l]; ++i) {
      const double z = trace.pre[l][i];
      trace.post[l][i] = z * sigmoid(z);
    }
    in = trace.post[l];
  }
  trace.output.resize(arch.data_dim);
  affine(params.weights(n_hidden), params.bias(n_hidden), in, trace.output);
}

std::vector<double> forward(const DenoiserParams& params, std::span<const double> x_t,
                            std::size_t t, std::size_t c) {
  ForwardTrace trace;
  forward_traced(params, x_t, t, c, trace);
  return std::move(trace.output);
}

void backward(const DenoiserParams& params, const ForwardTrace& trace,
              std::span<const double> upstream, ParamGrads& grads, std::span<double> grad_x) {
  const Architecture& arch = params.arch();
  if (upstream.size() != arch.data_dim) throw InputError("upstream dimension mismatch");
  if (grads.values.size() != params.size()) throw InputError("gradient shape mismatch");

  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> delta_in;
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    std::span<const double> in = l == 0 ? std::span<const double>(trace.input) : trace.post[l - 1];
    const std::size_t n_in = in.size();
    const std::size_t n_out = delta.size();
    auto w = params.weights(l);
    double* dw = grads.values.data() + params.weight_offset(l);
    double* db = grads.values.data() + params.bias_offset(l);
    delta_in.assign(n_in, 0.0);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double g = delta[i];
      db[i] += g;
      const double* row = w.data() + i * n_in;
      double* drow = dw + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) {
        drow[j] += g * in[j];
        delta_in[j] += row[j] * g;
      }
    }
    if (l > 0) {
      const auto& pre = trace.pre[l - 1];
      for (std::size_t j = 0; j < n_in; ++j) {
        const double s = sigmoid(pre[j]);
        delta_in[j] *= s * (1.0 + pre[j] * (1.0 - s));
      }
    }
    delta.swap(delta_in);
  }

  double* dcond = grads.values.data() + params.cond_offset() + trace.condition * arch.cond_dim;
  const std::size_t cond_start = arch.data_dim + arch.time_dim;
  for (std::size_t k = 0; k < arch.cond_dim; ++k) dcond[k] += delta[cond_start + k];
  if (!grad_x.empty()) {
    if (grad_x.size() != arch.data_dim) throw InputError("grad_x dimension mismatch");
    std::copy(delta.begin(), delta.begin() + static_cast<std::ptrdiff_t>(arch.data_dim),
              grad_x.begin());
  }
}

ForwardBackward forward_backward(const DenoiserParams& params, std::span<const double> x_t,
                                 std::size_t t, std::size_t c, std::span<const double> upstream) {
  ForwardTrace trace;
  forward_traced(params, x_t, t, c, trace);
  ForwardBackward out{std::move(trace.output), ParamGrads(params),
                      std::vector<double>(params.arch().data_dim)};
  trace.output = out.eps_hat;
  backward(params, trace, upstream, out.grads, out.grad_x);
  return out;
}

}  // namespace sudo
