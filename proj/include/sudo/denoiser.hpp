#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sudo {

/// Shape of the conditional noise-prediction MLP.
///
/// The network input is the concatenation [x_t, time embedding, condition
/// embedding] of width data_dim + time_dim + cond_dim. Hidden layers use SiLU;
/// the last layer is linear with data_dim outputs.
struct Architecture {
  std::size_t data_dim = 2;
  std::size_t num_conditions = 1;
  std::size_t time_dim = 16;
  std::size_t cond_dim = 8;
  std::vector<std::size_t> hidden{64, 64};

  /// Throws ConfigError on odd time_dim or any zero width.
  void validate() const;

  std::size_t input_dim() const { return data_dim + time_dim + cond_dim; }
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;
  std::size_t param_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All weights of one denoiser, stored flat in checkpoint order: for each
/// layer its row-major weight matrix then its bias, followed by the
/// K x cond_dim condition table.
class DenoiserParams {
 public:
  explicit DenoiserParams(Architecture arch);

  const Architecture& arch() const noexcept { return arch_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t weight_offset(std::size_t layer) const { return layer_offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;
  std::size_t cond_offset() const noexcept { return cond_offset_; }

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  std::span<const double> cond_embedding(std::size_t c) const;

  bool all_finite() const;

  friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
    return a.arch_ == b.arch_ && a.values_ == b.values_;
  }

 private:
  Architecture arch_;
  std::vector<double> values_;
  std::vector<std::size_t> layer_offsets_;
  std::size_t cond_offset_ = 0;
};

/// Gradient carrier, laid out exactly like DenoiserParams::values().
struct ParamGrads {
  std::vector<double> values;

  ParamGrads() = default;
  explicit ParamGrads(const DenoiserParams& like) : values(like.size(), 0.0) {}

  void add_scaled(const ParamGrads& other, double scale);
  double norm() const;
};

/// Glorot-uniform hidden weights, zero biases, N(0, 0.02^2) condition
/// embeddings and a zero final layer, so a fresh network predicts zero noise.
DenoiserParams init_params(const Architecture& arch, std::uint64_t seed);

/// Sinusoidal embedding: sin(t * f_i) for the first half, cos(t * f_i) for
/// the second, with f_i = 10000^(-2i/dim).
std::vector<double> time_embedding(std::size_t t, std::size_t dim);
void time_embedding_into(std::size_t t, std::span<double> out);

/// Intermediate values of one forward pass, kept for the backward pass.
/// Reusing one trace across calls avoids reallocations.
struct ForwardTrace {
  std::size_t condition = 0;
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // hidden pre-activations
  std::vector<std::vector<double>> post;  // hidden activations
  std::vector<double> output;
};

std::vector<double> forward(const DenoiserParams& params, std::span<const double> x_t,
                            std::size_t t, std::size_t c);

void forward_traced(const DenoiserParams& params, std::span<const double> x_t, std::size_t t,
                    std::size_t c, ForwardTrace& trace);

/// Accumulates d<upstream, output>/dparams into `grads`. When `grad_x` is
/// non-empty it receives (overwrites) the gradient with respect to x_t.
void backward(const DenoiserParams& params, const ForwardTrace& trace,
              std::span<const double> upstream, ParamGrads& grads, std::span<double> grad_x = {});

struct ForwardBackward {
  std::vector<double> eps_hat;
  ParamGrads grads;
  std::vector<double> grad_x;
};

ForwardBackward forward_backward(const DenoiserParams& params, std::span<const double> x_t,
                                 std::size_t t, std::size_t c, std::span<const double> upstream);

}  // namespace sudo
