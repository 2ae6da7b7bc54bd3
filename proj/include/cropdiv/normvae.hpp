#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "cropdiv/nnkit.hpp"
#include "cropdiv/synthworld.hpp"
#include "cropdiv/types.hpp"

namespace cropdiv::normvae {

/// Linear map from an IoU score in [0.5, 1] to a target latent norm.
/// The default is inversely correlated: g(1) = sqrt(N), g(0.5) = 5 sqrt(N),
/// so harder crops land further from the origin.
struct GMap {
  double w = 0.0;
  double b = 0.0;
  int latent_dim = 0;

  static GMap inverse_default(int latent_dim);
  /// Endpoint construction: g(1) = high_mult * sqrt(N) ... g(0.5) = low_mult...
  static GMap from_endpoints(int latent_dim, double g_at_one, double g_at_half);

  double value(double iou) const;
};

double g_map(const GMap& gmap, double iou);

enum class Mode : std::uint8_t { Vanilla = 0, Norm = 1 };

struct VaeConfig {
  int feature_dim = 64;   // D
  int latent_dim = 16;    // N
  int semantic_dim = 16;  // S
  std::vector<int> encoder_hidden{128, 128};  // three FC layers total
  std::vector<int> decoder_hidden{128};       // two FC layers total
  GMap gmap = GMap::inverse_default(16);
  double kl_weight = 0.25;
  double leaky_slope = 0.2;
  int epochs = 300;
  int batch_size = 64;
  nnkit::AdamConfig optimizer;
  Mode mode = Mode::Norm;

  nnkit::MlpSpec encoder_spec() const;  // (D+S) -> ... -> 2N
  nnkit::MlpSpec decoder_spec() const;  // (N+S) -> ... -> D
  void validate() const;
};

struct EncoderOutput {
  Vector mu;       // dim N
  Vector log_var;  // dim N, clamped to [-10, 10]
};

struct VaeParams {
  nnkit::ParamStore encoder;
  nnkit::ParamStore decoder;
  VaeConfig config;

  static VaeParams init(const VaeConfig& cfg, std::uint64_t seed);
};

struct GenerationRequest {
  Vector semantic;  // dim S
  int count = 30;
  std::vector<double> beta_schedule;  // cycled if shorter than count
  std::uint64_t seed = 0;
};

struct GeneratedFeature {
  Vector feature;
  double beta = 0.0;
};

/// Rescales z to the same direction with norm g(iou). Throws NumericError
/// when ||z|| <= 1e-12.
Vector rescale_latent(const Vector& z, double iou, const GMap& gmap);

/// Vector-Jacobian product of rescale_latent w.r.t. z:
/// J = g(s) * (I / ||z|| - z z^T / ||z||^3).
Vector rescale_backward(const Vector& z, double iou, const GMap& gmap,
                        const Vector& upstream_grad);

EncoderOutput encode(const VaeParams& params, const Vector& feature,
                     const Vector& semantic);

/// z = mu + exp(0.5 * log_var) .* eps; eps is always supplied by the caller.
Vector reparameterize(const EncoderOutput& out, const Vector& eps);

Vector decode(const VaeParams& params, const Vector& z, const Vector& semantic);

struct TrainSample {
  Vector feature;   // dim D
  Vector semantic;  // dim S
  double iou = 1.0;
  Vector eps;  // dim N
};

struct LossResult {
  double loss = 0.0;
  double kl = 0.0;  // mean KL term over the batch, before kl_weight
  nnkit::ParamStore encoder_grads;
  nnkit::ParamStore decoder_grads;
};

/// Batch objective: mean over the batch of
///   kl_weight * KL(mu, log_var || N(0, I)) + ||decode(...) - f||^2,
/// with the latent rescaling inserted between reparameterize and decode in
/// Norm mode. Returns analytic gradients for both networks.
LossResult vae_loss(const VaeParams& params, const std::vector<TrainSample>& batch,
                    Mode mode);

struct TrainResult {
  VaeParams params;
  std::vector<double> epoch_loss;  // mean loss per epoch
  std::vector<double> epoch_kl;    // mean KL term per epoch
};

/// Shuffled mini-batch Adam training on the base split. Deterministic per seed.
TrainResult train(VaeParams params, const synthworld::DatasetSplit& split,
                  std::uint64_t seed);

/// Eq.-style generation: draw z ~ N(0, I), normalize, scale by the scheduled
/// beta, decode conditioned on the request's semantic vector.
std::vector<GeneratedFeature> generate(const VaeParams& params,
                                       const GenerationRequest& req);

/// Norm levels spanning [g(1), g(0.5)] in steps of 0.75 * sqrt(N), cycled to
/// k values.
std::vector<double> default_beta_schedule(const GMap& gmap, int k);

void save_checkpoint(const VaeParams& params, const std::filesystem::path& path);
VaeParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cropdiv::normvae
