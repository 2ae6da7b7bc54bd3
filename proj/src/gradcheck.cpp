#include "cropdiv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cropdiv/nnkit.hpp"
#include "cropdiv/normvae.hpp"
#include "cropdiv/rng.hpp"

namespace cropdiv::gradcheck {

namespace {

constexpr int kInstances = 20;
constexpr double kH = 1e-5;
constexpr double kTolLoose = 1e-4;
constexpr double kTolRescale = 1e-6;

using nnkit::ActivationSpec;
using nnkit::MlpSpec;
using nnkit::ParamStore;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(gen);
  }
  return m;
}

MlpSpec random_spec(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> depth_dist(1, 3);
  std::uniform_int_distribution<int> dim_dist(2, 8);
  std::uniform_int_distribution<int> act_dist(0, 1);
  MlpSpec spec;
  const int depth = depth_dist(gen);
  for (int i = 0; i <= depth; ++i) spec.layer_dims.push_back(dim_dist(gen));
  for (int i = 0; i < depth - 1; ++i) {
    spec.hidden_activations.push_back(act_dist(gen) == 0
                                          ? ActivationSpec::leaky_relu(0.2)
                                          : ActivationSpec::relu());
  }
  return spec;
}

/// Wraps an n-vector as a single-layer ParamStore so finite_diff_grad can
/// probe it.
ParamStore wrap_vector(const Vector& v) {
  ParamStore store;
  store.layers.push_back(
      {Matrix(v.transpose()), Vector::Zero(0)});
  return store;
}

Vector unwrap_vector(const ParamStore& store) {
  return store.layers[0].weight.row(0).transpose();
}

/// Central differences are meaningless within h of a ReLU kink, so instances
/// whose hidden preactivations come too close to zero are redrawn.
bool near_kink(const nnkit::ForwardTrace& trace) {
  for (std::size_t i = 0; i + 1 < trace.pre.size(); ++i) {
    if (trace.pre[i].cwiseAbs().minCoeff() < 1e-3) return true;
  }
  return false;
}

CheckResult check_mlp_backward() {
  double worst = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    MlpSpec spec;
    ParamStore params;
    Matrix input, coeffs;
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::mt19937_64 gen(rng::derive_seed(
          1000 + 100 * attempt, static_cast<std::uint64_t>(inst)));
      spec = random_spec(gen);
      params = ParamStore::glorot(spec, gen);
      input = random_matrix(3, spec.input_dim(), gen);
      coeffs = random_matrix(3, spec.output_dim(), gen);
      auto [out, trace] = nnkit::mlp_forward(params, spec, input);
      if (!near_kink(trace)) break;
    }

    auto loss = [&](const ParamStore& p) {
      auto [out, trace] = nnkit::mlp_forward(p, spec, input);
      return out.cwiseProduct(coeffs).sum();
    };
    auto [out, trace] = nnkit::mlp_forward(params, spec, input);
    auto [analytic, input_grad] = nnkit::mlp_backward(params, spec, trace, coeffs);
    (void)input_grad;
    const ParamStore numeric = nnkit::finite_diff_grad(loss, params, kH);
    worst = std::max(worst, nnkit::max_grad_rel_error(analytic, numeric));
  }
  return {"mlp_backward", worst, kTolLoose, worst <= kTolLoose};
}

CheckResult check_reparameterize() {
  double worst = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    std::mt19937_64 gen(rng::derive_seed(2000, static_cast<std::uint64_t>(inst)));
    const int latent = 2 + inst % 8;
    const Vector mu = rng::gaussian(latent, gen);
    const Vector log_var = 0.5 * rng::gaussian(latent, gen);
    const Vector eps = rng::gaussian(latent, gen);
    const Vector coeffs = rng::gaussian(latent, gen);

    Vector packed(2 * latent);
    packed.head(latent) = mu;
    packed.tail(latent) = log_var;
    const ParamStore params = wrap_vector(packed);

    auto loss = [&](const ParamStore& p) {
      const Vector v = unwrap_vector(p);
      normvae::EncoderOutput out{v.head(latent), v.tail(latent)};
      return coeffs.dot(normvae::reparameterize(out, eps));
    };

    // Analytic: d/dmu = coeffs, d/dlog_var = 0.5 * exp(0.5 lv) .* eps .* coeffs.
    Vector analytic(2 * latent);
    analytic.head(latent) = coeffs;
    analytic.tail(latent) = 0.5 * (0.5 * log_var.array()).exp().matrix()
                                      .cwiseProduct(eps)
                                      .cwiseProduct(coeffs);
    const ParamStore numeric = nnkit::finite_diff_grad(loss, params, kH);
    worst = std::max(worst, nnkit::max_grad_rel_error(wrap_vector(analytic), numeric));
  }
  return {"reparameterize", worst, kTolLoose, worst <= kTolLoose};
}

CheckResult check_rescale_backward() {
  double worst = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    std::mt19937_64 gen(rng::derive_seed(3000, static_cast<std::uint64_t>(inst)));
    const int latent = 2 + inst % 15;
    const normvae::GMap gmap = normvae::GMap::inverse_default(latent);
    std::uniform_real_distribution<double> iou_dist(0.5, 1.0);
    const double iou = iou_dist(gen);
    const Vector z = rng::gaussian(latent, gen);
    const Vector upstream = rng::gaussian(latent, gen);

    const ParamStore params = wrap_vector(z);
    auto loss = [&](const ParamStore& p) {
      return upstream.dot(normvae::rescale_latent(unwrap_vector(p), iou, gmap));
    };
    const Vector analytic = normvae::rescale_backward(z, iou, gmap, upstream);
    const ParamStore numeric = nnkit::finite_diff_grad(loss, params, kH);
    worst = std::max(worst, nnkit::max_grad_rel_error(wrap_vector(analytic), numeric));
  }
  return {"rescale_backward", worst, kTolRescale, worst <= kTolRescale};
}

CheckResult check_vae_loss(normvae::Mode mode) {
  double worst = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    std::mt19937_64 gen(rng::derive_seed(4000 + (mode == normvae::Mode::Norm ? 1 : 0),
                                         static_cast<std::uint64_t>(inst)));
    normvae::VaeConfig cfg;
    cfg.feature_dim = 6;
    cfg.semantic_dim = 3;
    cfg.latent_dim = 4;
    cfg.encoder_hidden = {8};
    cfg.decoder_hidden = {8};
    cfg.gmap = normvae::GMap::inverse_default(4);
    cfg.mode = mode;
    normvae::VaeParams params =
        normvae::VaeParams::init(cfg, rng::derive_seed(50, inst));

    std::uniform_real_distribution<double> iou_dist(0.5, 1.0);
    std::vector<normvae::TrainSample> batch;
    for (int i = 0; i < 4; ++i) {
      batch.push_back({rng::gaussian(cfg.feature_dim, gen),
                       rng::gaussian(cfg.semantic_dim, gen), iou_dist(gen),
                       rng::gaussian(cfg.latent_dim, gen)});
    }

    const auto analytic = normvae::vae_loss(params, batch, mode);

    auto encoder_loss = [&](const ParamStore& p) {
      normvae::VaeParams probe = params;
      probe.encoder = p;
      return normvae::vae_loss(probe, batch, mode).loss;
    };
    auto decoder_loss = [&](const ParamStore& p) {
      normvae::VaeParams probe = params;
      probe.decoder = p;
      return normvae::vae_loss(probe, batch, mode).loss;
    };
    const ParamStore enc_numeric =
        nnkit::finite_diff_grad(encoder_loss, params.encoder, kH);
    const ParamStore dec_numeric =
        nnkit::finite_diff_grad(decoder_loss, params.decoder, kH);
    worst = std::max(worst,
                     nnkit::max_grad_rel_error(analytic.encoder_grads, enc_numeric));
    worst = std::max(worst,
                     nnkit::max_grad_rel_error(analytic.decoder_grads, dec_numeric));
  }
  const std::string name = mode == normvae::Mode::Norm ? "vae_loss_norm"
                                                       : "vae_loss_vanilla";
  return {name, worst, kTolLoose, worst <= kTolLoose};
}

}  // namespace

std::vector<CheckResult> run_suite() {
  std::vector<CheckResult> results;
  results.push_back(check_mlp_backward());
  results.push_back(check_reparameterize());
  results.push_back(check_rescale_backward());
  results.push_back(check_vae_loss(normvae::Mode::Vanilla));
  results.push_back(check_vae_loss(normvae::Mode::Norm));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.pass; });
}

}  // namespace cropdiv::gradcheck
