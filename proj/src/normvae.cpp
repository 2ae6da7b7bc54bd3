#include "cropdiv/normvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include "cropdiv/io.hpp"
#include "cropdiv/rng.hpp"

namespace cropdiv::normvae {

namespace {

constexpr char kCheckpointMagic[8] = {'N', 'V', 'A', 'E', 'c', 'k', 'p', '1'};
constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;
constexpr double kNormEps = 1e-12;

double clamp_log_var(double v) { return std::clamp(v, kLogVarMin, kLogVarMax); }

}  // namespace

GMap GMap::inverse_default(int latent_dim) {
  const double root = std::sqrt(static_cast<double>(latent_dim));
  return {-8.0 * root, 9.0 * root, latent_dim};
}

GMap GMap::from_endpoints(int latent_dim, double g_at_one, double g_at_half) {
  const double w = 2.0 * (g_at_one - g_at_half);
  return {w, g_at_one - w, latent_dim};
}

double GMap::value(double iou) const {
  if (!(iou >= 0.5 && iou <= 1.0)) {
    throw ConfigError("g_map: IoU " + std::to_string(iou) + " outside [0.5, 1]");
  }
  return w * iou + b;
}

double g_map(const GMap& gmap, double iou) { return gmap.value(iou); }

nnkit::MlpSpec VaeConfig::encoder_spec() const {
  nnkit::MlpSpec spec;
  spec.layer_dims.push_back(feature_dim + semantic_dim);
  for (int h : encoder_hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(2 * latent_dim);
  spec.hidden_activations.assign(encoder_hidden.size(),
                                 nnkit::ActivationSpec::leaky_relu(leaky_slope));
  return spec;
}

nnkit::MlpSpec VaeConfig::decoder_spec() const {
  nnkit::MlpSpec spec;
  spec.layer_dims.push_back(latent_dim + semantic_dim);
  for (int h : decoder_hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(feature_dim);
  spec.hidden_activations.assign(decoder_hidden.size(),
                                 nnkit::ActivationSpec::leaky_relu(leaky_slope));
  return spec;
}

void VaeConfig::validate() const {
  if (feature_dim <= 0 || latent_dim <= 0 || semantic_dim <= 0) {
    throw ConfigError("VaeConfig: dims must be positive");
  }
  if (gmap.latent_dim != latent_dim) {
    throw ConfigError("VaeConfig: gmap latent_dim " +
                      std::to_string(gmap.latent_dim) + " != latent_dim " +
                      std::to_string(latent_dim));
  }
  if (!(kl_weight > 0.0)) {
    throw ConfigError("VaeConfig: kl_weight must be positive");
  }
  if (epochs < 0 || batch_size <= 0) {
    throw ConfigError("VaeConfig: bad training hyperparameters");
  }
  encoder_spec().validate();
  decoder_spec().validate();
}

VaeParams VaeParams::init(const VaeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VaeParams params;
  params.config = cfg;
  std::mt19937_64 gen(rng::derive_seed(seed, 10));
  params.encoder = nnkit::ParamStore::glorot(cfg.encoder_spec(), gen);
  params.decoder = nnkit::ParamStore::glorot(cfg.decoder_spec(), gen);
  return params;
}

Vector rescale_latent(const Vector& z, double iou, const GMap& gmap) {
  const double norm = z.norm();
  if (norm <= kNormEps) {
    throw NumericError("rescale_latent: degenerate latent with norm " +
                       std::to_string(norm));
  }
  return z * (gmap.value(iou) / norm);
}

Vector rescale_backward(const Vector& z, double iou, const GMap& gmap,
                        const Vector& upstream_grad) {
  const double norm = z.norm();
  if (norm <= kNormEps) {
    throw NumericError("rescale_backward: degenerate latent with norm " +
                       std::to_string(norm));
  }
  if (upstream_grad.size() != z.size()) {
    throw ShapeError("rescale_backward: upstream grad dim mismatch");
  }
  const double g = gmap.value(iou);
  const double radial = z.dot(upstream_grad) / (norm * norm);
  return (g / norm) * (upstream_grad - radial * z);
}

EncoderOutput encode(const VaeParams& params, const Vector& feature,
                     const Vector& semantic) {
  const auto spec = params.config.encoder_spec();
  if (feature.size() != params.config.feature_dim ||
      semantic.size() != params.config.semantic_dim) {
    throw ShapeError("encode: feature/semantic dims do not match config");
  }
  Matrix input(1, spec.input_dim());
  input.leftCols(feature.size()) = feature.transpose();
  input.rightCols(semantic.size()) = semantic.transpose();
  auto [out, trace] = nnkit::mlp_forward(params.encoder, spec, input);
  const int latent = params.config.latent_dim;
  EncoderOutput enc;
  enc.mu = out.row(0).head(latent).transpose();
  enc.log_var = out.row(0).tail(latent).transpose().unaryExpr(
      [](double v) { return clamp_log_var(v); });
  return enc;
}

Vector reparameterize(const EncoderOutput& out, const Vector& eps) {
  if (eps.size() != out.mu.size()) {
    throw ShapeError("reparameterize: eps dim mismatch");
  }
  return out.mu + (0.5 * out.log_var.array()).exp().matrix().cwiseProduct(eps);
}

Vector decode(const VaeParams& params, const Vector& z, const Vector& semantic) {
  const auto spec = params.config.decoder_spec();
  if (z.size() != params.config.latent_dim ||
      semantic.size() != params.config.semantic_dim) {
    throw ShapeError("decode: latent/semantic dims do not match config");
  }
  Matrix input(1, spec.input_dim());
  input.leftCols(z.size()) = z.transpose();
  input.rightCols(semantic.size()) = semantic.transpose();
  auto [out, trace] = nnkit::mlp_forward(params.decoder, spec, input);
  return out.row(0).transpose();
}

LossResult vae_loss(const VaeParams& params, const std::vector<TrainSample>& batch,
                    Mode mode) {
  if (batch.empty()) {
    throw ConfigError("vae_loss: empty batch");
  }
  const VaeConfig& cfg = params.config;
  const auto enc_spec = cfg.encoder_spec();
  const auto dec_spec = cfg.decoder_spec();
  const int dim_d = cfg.feature_dim;
  const int dim_s = cfg.semantic_dim;
  const int latent = cfg.latent_dim;
  const auto batch_size = static_cast<Eigen::Index>(batch.size());

  Matrix enc_in(batch_size, dim_d + dim_s);
  Matrix features(batch_size, dim_d);
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    const TrainSample& s = batch[static_cast<std::size_t>(i)];
    if (s.feature.size() != dim_d || s.semantic.size() != dim_s ||
        s.eps.size() != latent) {
      throw ShapeError("vae_loss: sample " + std::to_string(i) +
                       " has mismatched dims");
    }
    enc_in.row(i).head(dim_d) = s.feature.transpose();
    enc_in.row(i).tail(dim_s) = s.semantic.transpose();
    features.row(i) = s.feature.transpose();
  }

  auto [enc_out, enc_trace] = nnkit::mlp_forward(params.encoder, enc_spec, enc_in);
  Matrix mu = enc_out.leftCols(latent);
  Matrix log_var_raw = enc_out.rightCols(latent);
  Matrix log_var = log_var_raw.unaryExpr([](double v) { return clamp_log_var(v); });
  Matrix clamp_mask = log_var_raw.unaryExpr([](double v) {
    return (v > kLogVarMin && v < kLogVarMax) ? 1.0 : 0.0;
  });

  Matrix sigma = (0.5 * log_var.array()).exp().matrix();
  Matrix z(batch_size, latent);
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    z.row(i) = mu.row(i) + sigma.row(i).cwiseProduct(
                               batch[static_cast<std::size_t>(i)].eps.transpose());
  }

  Matrix z_dec = z;
  if (mode == Mode::Norm) {
    for (Eigen::Index i = 0; i < batch_size; ++i) {
      z_dec.row(i) = rescale_latent(z.row(i).transpose(),
                                    batch[static_cast<std::size_t>(i)].iou, cfg.gmap)
                         .transpose();
    }
  }

  Matrix dec_in(batch_size, latent + dim_s);
  dec_in.leftCols(latent) = z_dec;
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    dec_in.row(i).tail(dim_s) =
        batch[static_cast<std::size_t>(i)].semantic.transpose();
  }
  auto [recon, dec_trace] = nnkit::mlp_forward(params.decoder, dec_spec, dec_in);

  const Matrix diff = recon - features;
  const double recon_loss = diff.squaredNorm() / static_cast<double>(batch_size);
  const double kl =
      0.5 *
      (log_var.array().exp() + mu.array().square() - 1.0 - log_var.array()).sum() /
      static_cast<double>(batch_size);
  const double loss = recon_loss + cfg.kl_weight * kl;
  if (!std::isfinite(loss)) {
    throw NumericError("vae_loss: non-finite loss (recon " +
                       std::to_string(recon_loss) + ", kl " + std::to_string(kl) +
                       ") over batch of " + std::to_string(batch.size()));
  }

  // Backward pass.
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  Matrix d_recon = 2.0 * inv_b * diff;
  auto [dec_grads, d_dec_in] =
      nnkit::mlp_backward(params.decoder, dec_spec, dec_trace, d_recon);
  Matrix d_z_dec = d_dec_in.leftCols(latent);

  Matrix d_z(batch_size, latent);
  if (mode == Mode::Norm) {
    for (Eigen::Index i = 0; i < batch_size; ++i) {
      d_z.row(i) = rescale_backward(z.row(i).transpose(),
                                    batch[static_cast<std::size_t>(i)].iou, cfg.gmap,
                                    d_z_dec.row(i).transpose())
                       .transpose();
    }
  } else {
    d_z = d_z_dec;
  }

  Matrix d_mu = d_z + cfg.kl_weight * inv_b * mu;
  Matrix d_log_var(batch_size, latent);
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    d_log_var.row(i) =
        0.5 * d_z.row(i)
                  .cwiseProduct(sigma.row(i))
                  .cwiseProduct(batch[static_cast<std::size_t>(i)].eps.transpose());
  }
  d_log_var += cfg.kl_weight * inv_b * 0.5 *
               (log_var.array().exp() - 1.0).matrix();
  d_log_var = d_log_var.cwiseProduct(clamp_mask);

  Matrix d_enc_out(batch_size, 2 * latent);
  d_enc_out.leftCols(latent) = d_mu;
  d_enc_out.rightCols(latent) = d_log_var;
  auto [enc_grads, d_enc_in] =
      nnkit::mlp_backward(params.encoder, enc_spec, enc_trace, d_enc_out);
  (void)d_enc_in;

  LossResult result;
  result.loss = loss;
  result.kl = kl;
  result.encoder_grads = std::move(enc_grads);
  result.decoder_grads = std::move(dec_grads);
  return result;
}

TrainResult train(VaeParams params, const synthworld::DatasetSplit& split,
                  std::uint64_t seed) {
  const VaeConfig& cfg = params.config;
  cfg.validate();
  if (split.base_samples.empty()) {
    throw DataError("train: base split has no samples");
  }

  std::unordered_map<std::uint32_t, Vector> semantics;
  for (const auto& c : split.base_classes) semantics[c.class_id] = c.semantic;
  for (const auto& c : split.novel_classes) semantics[c.class_id] = c.semantic;

  std::mt19937_64 gen(rng::derive_seed(seed, 20));
  auto enc_state = nnkit::AdamState::init(params.encoder, cfg.optimizer);
  auto dec_state = nnkit::AdamState::init(params.decoder, cfg.optimizer);

  std::vector<std::size_t> order(split.base_samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_loss = 0.0;
    double epoch_kl = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainSample> batch;
      batch.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& sample = split.base_samples[order[k]];
        const auto it = semantics.find(sample.class_id);
        if (it == semantics.end()) {
          throw DataError("train: sample references unknown class id " +
                          std::to_string(sample.class_id));
        }
        batch.push_back({sample.feature, it->second, sample.iou,
                         rng::gaussian(cfg.latent_dim, gen)});
      }

      LossResult step;
      try {
        step = vae_loss(params, batch, cfg.mode);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", batch at " +
                           std::to_string(start) + ": " + e.what());
      }
      nnkit::adam_step(params.encoder, step.encoder_grads, enc_state);
      nnkit::adam_step(params.decoder, step.decoder_grads, dec_state);

      epoch_loss += step.loss * static_cast<double>(batch.size());
      epoch_kl += step.kl * static_cast<double>(batch.size());
      seen += batch.size();
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    result.epoch_kl.push_back(epoch_kl / static_cast<double>(seen));
  }
  result.params = std::move(params);
  return result;
}

std::vector<GeneratedFeature> generate(const VaeParams& params,
                                       const GenerationRequest& req) {
  if (req.count < 1) {
    throw ConfigError("generate: count must be >= 1");
  }
  if (req.beta_schedule.empty()) {
    throw ConfigError("generate: empty beta schedule");
  }
  for (double beta : req.beta_schedule) {
    if (!(beta > 0.0)) {
      throw ConfigError("generate: beta values must be positive");
    }
  }
  if (req.semantic.size() != params.config.semantic_dim) {
    throw ShapeError("generate: semantic dim mismatch");
  }

  std::mt19937_64 gen(rng::derive_seed(req.seed, 30));
  std::vector<GeneratedFeature> out;
  out.reserve(static_cast<std::size_t>(req.count));
  for (int i = 0; i < req.count; ++i) {
    const double beta = req.beta_schedule[static_cast<std::size_t>(i) %
                                          req.beta_schedule.size()];
    const Vector z = beta * rng::unit(params.config.latent_dim, gen);
    out.push_back({decode(params, z, req.semantic), beta});
  }
  return out;
}

std::vector<double> default_beta_schedule(const GMap& gmap, int k) {
  if (k < 1) {
    throw ConfigError("default_beta_schedule: k must be >= 1");
  }
  const double root = std::sqrt(static_cast<double>(gmap.latent_dim));
  const double lo = std::min(gmap.value(1.0), gmap.value(0.5));
  const double hi = std::max(gmap.value(1.0), gmap.value(0.5));
  const double step = 0.75 * root;

  std::vector<double> levels;
  for (double v = lo; v <= hi + 1e-9; v += step) levels.push_back(v);

  std::vector<double> schedule;
  schedule.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    schedule.push_back(levels[static_cast<std::size_t>(i) % levels.size()]);
  }
  return schedule;
}

void save_checkpoint(const VaeParams& params, const std::filesystem::path& path) {
  const VaeConfig& cfg = params.config;
  io::Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(cfg.feature_dim));
  w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
  w.u32(static_cast<std::uint32_t>(cfg.semantic_dim));
  w.u32(static_cast<std::uint32_t>(cfg.encoder_hidden.size()));
  for (int h : cfg.encoder_hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(cfg.decoder_hidden.size()));
  for (int h : cfg.decoder_hidden) w.u32(static_cast<std::uint32_t>(h));
  w.f64(cfg.gmap.w);
  w.f64(cfg.gmap.b);
  w.f64(cfg.kl_weight);
  w.f64(cfg.leaky_slope);
  w.u8(static_cast<std::uint8_t>(cfg.mode));

  auto write_store = [&w](const nnkit::ParamStore& store) {
    const std::size_t n = store.scalar_count();
    for (std::size_t i = 0; i < n; ++i) w.f64(store.get_flat(i));
  };
  write_store(params.encoder);
  write_store(params.decoder);

  io::Writer final;
  final.bytes(w.buffer().data(), w.size());
  final.u32(io::crc32(w.buffer().data(), w.size()));
  io::write_file_atomic(path, final.buffer());
}

VaeParams load_checkpoint(const std::filesystem::path& path) {
  auto data = io::read_file(path);
  if (data.size() < sizeof(kCheckpointMagic) + 4) {
    throw DataError("checkpoint too small: " + path.string());
  }
  const std::size_t payload = data.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, data.data() + payload, 4);
  if (io::crc32(data.data(), payload) != stored_crc) {
    throw DataError("checkpoint CRC mismatch: " + path.string());
  }
  data.resize(payload);
  io::Reader r(std::move(data));

  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw DataError("checkpoint magic mismatch: " + path.string());
  }

  VaeConfig cfg;
  cfg.feature_dim = static_cast<int>(r.u32());
  cfg.latent_dim = static_cast<int>(r.u32());
  cfg.semantic_dim = static_cast<int>(r.u32());
  cfg.encoder_hidden.resize(r.u32());
  for (auto& h : cfg.encoder_hidden) h = static_cast<int>(r.u32());
  cfg.decoder_hidden.resize(r.u32());
  for (auto& h : cfg.decoder_hidden) h = static_cast<int>(r.u32());
  cfg.gmap.w = r.f64();
  cfg.gmap.b = r.f64();
  cfg.gmap.latent_dim = cfg.latent_dim;
  cfg.kl_weight = r.f64();
  cfg.leaky_slope = r.f64();
  const std::uint8_t mode = r.u8();
  if (mode > 1) {
    throw DataError("checkpoint has unknown mode byte " + std::to_string(mode));
  }
  cfg.mode = static_cast<Mode>(mode);
  cfg.validate();

  VaeParams params;
  params.config = cfg;
  params.encoder = nnkit::ParamStore::zeros(cfg.encoder_spec());
  params.decoder = nnkit::ParamStore::zeros(cfg.decoder_spec());
  auto read_store = [&r](nnkit::ParamStore& store) {
    const std::size_t n = store.scalar_count();
    for (std::size_t i = 0; i < n; ++i) store.set_flat(i, r.f64());
  };
  read_store(params.encoder);
  read_store(params.decoder);
  if (!r.at_end()) {
    throw DataError("checkpoint has trailing bytes: " + path.string());
  }
  return params;
}

}  // namespace cropdiv::normvae
