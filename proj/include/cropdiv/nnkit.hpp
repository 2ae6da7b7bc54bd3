#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "cropdiv/types.hpp"

namespace cropdiv::nnkit {

enum class Activation { Identity, Relu, LeakyRelu };

struct ActivationSpec {
  Activation kind = Activation::Identity;
  double slope = 0.2;  // LeakyReLU only

  static ActivationSpec identity() { return {Activation::Identity, 0.0}; }
  static ActivationSpec relu() { return {Activation::Relu, 0.0}; }
  static ActivationSpec leaky_relu(double slope = 0.2) {
    return {Activation::LeakyRelu, slope};
  }
};

/// Dense MLP layout: layer_dims = {in, h1, ..., out}; one activation per
/// hidden layer, the output layer is linear.
struct MlpSpec {
  std::vector<int> layer_dims;
  std::vector<ActivationSpec> hidden_activations;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(layer_dims.size()) - 1; }

  void validate() const;
};

/// Per-layer weights and biases with a stable flat scalar index.
/// Flat order: layer 0 weight (row-major), layer 0 bias, layer 1 weight, ...
struct ParamStore {
  struct Layer {
    Matrix weight;  // in x out
    Vector bias;    // out
  };
  std::vector<Layer> layers;

  static ParamStore zeros(const MlpSpec& spec);
  static ParamStore zeros_like(const ParamStore& other);
  /// Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)).
  static ParamStore glorot(const MlpSpec& spec, std::mt19937_64& rng);

  std::size_t scalar_count() const;
  double get_flat(std::size_t index) const;
  void set_flat(std::size_t index, double value);

  bool same_shape(const ParamStore& other) const;
};

/// Everything mlp_backward needs: the input plus per-layer pre- and
/// post-activation values.
struct ForwardTrace {
  Matrix input;              // batch x in
  std::vector<Matrix> pre;   // batch x dim, one per layer
  std::vector<Matrix> post;  // batch x dim, one per layer
  Eigen::Index batch = 0;
};

/// Forward pass over a batch (rows = samples). Returns the output and the
/// trace required for backpropagation.
std::pair<Matrix, ForwardTrace> mlp_forward(const ParamStore& params,
                                            const MlpSpec& spec,
                                            const Matrix& input);

/// Reverse pass: upstream_grad is dLoss/dOutput with the forward output's
/// shape. Returns parameter gradients and the gradient w.r.t. the input.
std::pair<ParamStore, Matrix> mlp_backward(const ParamStore& params,
                                           const MlpSpec& spec,
                                           const ForwardTrace& trace,
                                           const Matrix& upstream_grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  long t = 0;
  AdamConfig cfg;

  static AdamState init(const ParamStore& params, AdamConfig cfg = {});
};

/// One bias-corrected Adam update, in place. Rejects non-finite gradients
/// naming the offending flat parameter index.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

/// Central finite differences over every scalar: (f(p+h) - f(p-h)) / 2h.
/// The oracle for all analytic gradients in this project.
ParamStore finite_diff_grad(const std::function<double(const ParamStore&)>& loss,
                            const ParamStore& params, double h);

/// Relative-error metric used by the gradient checks:
/// |a - n| / max(1e-8, |a| + |n|).
double grad_rel_error(double analytic, double numeric);

/// Max relative error over two same-shape stores.
double max_grad_rel_error(const ParamStore& analytic, const ParamStore& numeric);

}  // namespace cropdiv::nnkit
