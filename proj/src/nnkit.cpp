#include "cropdiv/nnkit.hpp"

#include <cmath>
#include <string>

namespace cropdiv::nnkit {

namespace {

double apply_act(const ActivationSpec& act, double x) {
  switch (act.kind) {
    case Activation::Identity:
      return x;
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::LeakyRelu:
      return x > 0.0 ? x : act.slope * x;
  }
  return x;
}

double act_grad(const ActivationSpec& act, double pre) {
  switch (act.kind) {
    case Activation::Identity:
      return 1.0;
    case Activation::Relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu:
      return pre > 0.0 ? 1.0 : act.slope;
  }
  return 1.0;
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) {
    throw ShapeError("MlpSpec needs at least one layer (2 dims), got " +
                     std::to_string(layer_dims.size()) + " dims");
  }
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    if (layer_dims[i] <= 0) {
      throw ShapeError("MlpSpec dim " + std::to_string(i) + " must be positive");
    }
  }
  const std::size_t hidden = layer_dims.size() - 2;
  if (hidden_activations.size() != hidden) {
    throw ShapeError("MlpSpec has " + std::to_string(hidden) +
                     " hidden layers but " +
                     std::to_string(hidden_activations.size()) + " activations");
  }
}

ParamStore ParamStore::zeros(const MlpSpec& spec) {
  spec.validate();
  ParamStore store;
  for (int l = 0; l < spec.layer_count(); ++l) {
    Layer layer;
    layer.weight = Matrix::Zero(spec.layer_dims[l], spec.layer_dims[l + 1]);
    layer.bias = Vector::Zero(spec.layer_dims[l + 1]);
    store.layers.push_back(std::move(layer));
  }
  return store;
}

ParamStore ParamStore::zeros_like(const ParamStore& other) {
  ParamStore store;
  for (const auto& layer : other.layers) {
    store.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                            Vector::Zero(layer.bias.size())});
  }
  return store;
}

ParamStore ParamStore::glorot(const MlpSpec& spec, std::mt19937_64& rng) {
  ParamStore store = zeros(spec);
  for (auto& layer : store.layers) {
    const double fan_in = static_cast<double>(layer.weight.rows());
    const double fan_out = static_cast<double>(layer.weight.cols());
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        layer.weight(i, j) = dist(rng);
      }
    }
    // biases stay zero
  }
  return store;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += static_cast<std::size_t>(layer.weight.size()) +
         static_cast<std::size_t>(layer.bias.size());
  }
  return n;
}

double ParamStore::get_flat(std::size_t index) const {
  for (const auto& layer : layers) {
    const std::size_t wsize = static_cast<std::size_t>(layer.weight.size());
    if (index < wsize) {
      const Eigen::Index cols = layer.weight.cols();
      return layer.weight(static_cast<Eigen::Index>(index) / cols,
                          static_cast<Eigen::Index>(index) % cols);
    }
    index -= wsize;
    const std::size_t bsize = static_cast<std::size_t>(layer.bias.size());
    if (index < bsize) {
      return layer.bias(static_cast<Eigen::Index>(index));
    }
    index -= bsize;
  }
  throw ShapeError("ParamStore flat index out of range");
}

void ParamStore::set_flat(std::size_t index, double value) {
  for (auto& layer : layers) {
    const std::size_t wsize = static_cast<std::size_t>(layer.weight.size());
    if (index < wsize) {
      const Eigen::Index cols = layer.weight.cols();
      layer.weight(static_cast<Eigen::Index>(index) / cols,
                   static_cast<Eigen::Index>(index) % cols) = value;
      return;
    }
    index -= wsize;
    const std::size_t bsize = static_cast<std::size_t>(layer.bias.size());
    if (index < bsize) {
      layer.bias(static_cast<Eigen::Index>(index)) = value;
      return;
    }
    index -= bsize;
  }
  throw ShapeError("ParamStore flat index out of range");
}

bool ParamStore::same_shape(const ParamStore& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
        layers[l].weight.cols() != other.layers[l].weight.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

std::pair<Matrix, ForwardTrace> mlp_forward(const ParamStore& params,
                                            const MlpSpec& spec,
                                            const Matrix& input) {
  spec.validate();
  if (static_cast<int>(params.layers.size()) != spec.layer_count()) {
    throw ShapeError("ParamStore has " + std::to_string(params.layers.size()) +
                     " layers, spec expects " + std::to_string(spec.layer_count()));
  }
  if (input.cols() != spec.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(input.cols()) +
                     " cols, layer 0 expects " + std::to_string(spec.input_dim()));
  }

  ForwardTrace trace;
  trace.input = input;
  trace.batch = input.rows();

  Matrix current = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.rows() != current.cols()) {
      throw ShapeError("mlp_forward: layer " + std::to_string(l) + " weight rows " +
                       std::to_string(layer.weight.rows()) + " != input cols " +
                       std::to_string(current.cols()));
    }
    Matrix pre = (current * layer.weight).rowwise() + layer.bias.transpose();
    Matrix post;
    const bool is_output = (l == spec.layer_count() - 1);
    if (is_output) {
      post = pre;
    } else {
      const ActivationSpec& act = spec.hidden_activations[l];
      post = pre.unaryExpr([&act](double x) { return apply_act(act, x); });
    }
    trace.pre.push_back(pre);
    trace.post.push_back(post);
    current = post;
  }
  return {current, std::move(trace)};
}

std::pair<ParamStore, Matrix> mlp_backward(const ParamStore& params,
                                           const MlpSpec& spec,
                                           const ForwardTrace& trace,
                                           const Matrix& upstream_grad) {
  spec.validate();
  if (static_cast<int>(trace.pre.size()) != spec.layer_count()) {
    throw ShapeError("mlp_backward: trace depth " + std::to_string(trace.pre.size()) +
                     " != spec layer count " + std::to_string(spec.layer_count()));
  }
  if (upstream_grad.rows() != trace.batch ||
      upstream_grad.cols() != spec.output_dim()) {
    throw ShapeError("mlp_backward: upstream grad is " +
                     std::to_string(upstream_grad.rows()) + "x" +
                     std::to_string(upstream_grad.cols()) + ", expected " +
                     std::to_string(trace.batch) + "x" +
                     std::to_string(spec.output_dim()));
  }

  ParamStore grads = ParamStore::zeros_like(params);
  Matrix delta = upstream_grad;  // dLoss/dPost of current layer

  for (int l = spec.layer_count() - 1; l >= 0; --l) {
    const bool is_output = (l == spec.layer_count() - 1);
    Matrix dpre;
    if (is_output) {
      dpre = delta;
    } else {
      const ActivationSpec& act = spec.hidden_activations[l];
      dpre = delta.cwiseProduct(trace.pre[l].unaryExpr(
          [&act](double pre) { return act_grad(act, pre); }));
    }
    const Matrix& prev = (l == 0) ? trace.input : trace.post[l - 1];
    grads.layers[l].weight = prev.transpose() * dpre;
    grads.layers[l].bias = dpre.colwise().sum().transpose();
    delta = dpre * params.layers[l].weight.transpose();
  }
  return {std::move(grads), std::move(delta)};
}

AdamState AdamState::init(const ParamStore& params, AdamConfig cfg) {
  AdamState state;
  state.m = ParamStore::zeros_like(params);
  state.v = ParamStore::zeros_like(params);
  state.t = 0;
  state.cfg = cfg;
  return state;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.m)) {
    throw ShapeError("adam_step: parameter/gradient/state shapes disagree");
  }
  const std::size_t n = params.scalar_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads.get_flat(i))) {
      throw NumericError("adam_step: non-finite gradient at flat index " +
                         std::to_string(i));
    }
  }

  const AdamConfig& c = state.cfg;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
      p -= c.lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + c.eps)).matrix();
    };
    update(params.layers[l].weight, grads.layers[l].weight, state.m.layers[l].weight,
           state.v.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, state.m.layers[l].bias,
           state.v.layers[l].bias);
  }
}

ParamStore finite_diff_grad(const std::function<double(const ParamStore&)>& loss,
                            const ParamStore& params, double h) {
  if (!(h > 0.0)) {
    throw NumericError("finite_diff_grad: h must be positive");
  }
  if (!std::isfinite(loss(params))) {
    throw NumericError("finite_diff_grad: loss is non-finite at the base point");
  }
  ParamStore grad = ParamStore::zeros_like(params);
  ParamStore probe = params;
  const std::size_t n = params.scalar_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double original = params.get_flat(i);
    probe.set_flat(i, original + h);
    const double plus = loss(probe);
    probe.set_flat(i, original - h);
    const double minus = loss(probe);
    probe.set_flat(i, original);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_diff_grad: non-finite loss probing flat index " +
                         std::to_string(i));
    }
    grad.set_flat(i, (plus - minus) / (2.0 * h));
  }
  return grad;
}

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
  return std::abs(analytic - numeric) / denom;
}

double max_grad_rel_error(const ParamStore& analytic, const ParamStore& numeric) {
  double worst = 0.0;
  const std::size_t n = analytic.scalar_count();
  for (std::size_t i = 0; i < n; ++i) {
    worst = std::max(worst, grad_rel_error(analytic.get_flat(i), numeric.get_flat(i)));
  }
  return worst;
}

}  // namespace cropdiv::nnkit
