#include "cropdiv/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "cropdiv/io.hpp"
#include "cropdiv/rng.hpp"

namespace cropdiv::synthworld {

namespace {

constexpr char kDatasetMagic[8] = {'C', 'D', 'I', 'V', 'D', 'S', 'v', '1'};
constexpr char kEmbeddingMagic[8] = {'C', 'D', 'I', 'V', 'E', 'M', 'B', '1'};

// Scale of the clean-feature centers relative to sqrt(D). Chosen so that the
// corruption drift at low IoU is comparable to the inter-class margins.
constexpr double kPrototypeScale = 0.22;

// Crop corruption directions are mostly shared across classes (truncating a
// crop distorts features in a largely class-agnostic way), with a
// semantic-dependent tilt mixed in at this weight.
constexpr double kBasisMix = 0.35;

/// Orthonormalizes the columns of raw (modified Gram-Schmidt, two passes).
Matrix orthonormalize(Matrix raw) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      for (Eigen::Index k = 0; k < j; ++k) {
        raw.col(j) -= raw.col(k).dot(raw.col(j)) * raw.col(k);
      }
      const double n = raw.col(j).norm();
      if (n < 1e-10) {
        throw NumericError("orthonormalize: rank-deficient corruption basis");
      }
      raw.col(j) /= n;
    }
  }
  return raw;
}

ClassSpec build_class(std::uint32_t class_id, Vector semantic,
                      const Matrix& proto_map, const Matrix& shared_basis,
                      const std::vector<Matrix>& basis_maps, double noise_sigma) {
  ClassSpec cls;
  cls.class_id = class_id;
  cls.semantic = std::move(semantic);
  const int feature_dim = static_cast<int>(proto_map.rows());

  Vector direction = proto_map * cls.semantic;
  const double n = direction.norm();
  if (n < 1e-10) {
    throw NumericError("build_class: degenerate prototype direction");
  }
  cls.prototype = (kPrototypeScale * std::sqrt(static_cast<double>(feature_dim)) / n) *
                  direction;

  Matrix raw = shared_basis;
  for (std::size_t r = 0; r < basis_maps.size(); ++r) {
    Vector tilt = basis_maps[r] * cls.semantic;
    const double tn = tilt.norm();
    if (tn < 1e-10) {
      throw NumericError("build_class: degenerate basis tilt");
    }
    raw.col(static_cast<Eigen::Index>(r)) += (kBasisMix / tn) * tilt;
  }
  cls.crop_basis = orthonormalize(std::move(raw));
  cls.noise_sigma = noise_sigma;
  return cls;
}

void write_class(io::Writer& w, const ClassSpec& cls) {
  w.u32(cls.class_id);
  for (Eigen::Index i = 0; i < cls.semantic.size(); ++i) w.f64(cls.semantic(i));
  for (Eigen::Index i = 0; i < cls.prototype.size(); ++i) w.f64(cls.prototype(i));
  for (Eigen::Index i = 0; i < cls.crop_basis.rows(); ++i) {
    for (Eigen::Index j = 0; j < cls.crop_basis.cols(); ++j) {
      w.f64(cls.crop_basis(i, j));
    }
  }
  w.f64(cls.noise_sigma);
}

ClassSpec read_class(io::Reader& r, int dim_d, int dim_s, int dim_r) {
  ClassSpec cls;
  cls.class_id = r.u32();
  cls.semantic = Vector(dim_s);
  for (int i = 0; i < dim_s; ++i) cls.semantic(i) = r.f64();
  cls.prototype = Vector(dim_d);
  for (int i = 0; i < dim_d; ++i) cls.prototype(i) = r.f64();
  cls.crop_basis = Matrix(dim_d, dim_r);
  for (int i = 0; i < dim_d; ++i) {
    for (int j = 0; j < dim_r; ++j) cls.crop_basis(i, j) = r.f64();
  }
  cls.noise_sigma = r.f64();
  return cls;
}

void write_sample(io::Writer& w, const CropSample& s) {
  w.u32(s.class_id);
  w.f64(s.iou);
  w.f64(s.box.x1);
  w.f64(s.box.y1);
  w.f64(s.box.x2);
  w.f64(s.box.y2);
  for (Eigen::Index i = 0; i < s.feature.size(); ++i) w.f64(s.feature(i));
}

CropSample read_sample(io::Reader& r, int dim_d) {
  const std::uint32_t class_id = r.u32();
  const double iou = r.f64();
  const double x1 = r.f64();
  const double y1 = r.f64();
  const double x2 = r.f64();
  const double y2 = r.f64();
  Vector feature(dim_d);
  for (int i = 0; i < dim_d; ++i) feature(i) = r.f64();
  if (!(iou >= 0.5 && iou <= 1.0)) {
    throw DataError("sample record with IoU " + std::to_string(iou) +
                    " outside [0.5, 1] at offset " + std::to_string(r.offset()));
  }
  CropSample s{std::move(feature), class_id, iou,
               geometry::BoundingBox(x1, y1, x2, y2)};
  return s;
}

}  // namespace

const ClassSpec* DatasetSplit::find_class(std::uint32_t class_id) const {
  for (const auto& c : base_classes) {
    if (c.class_id == class_id) return &c;
  }
  for (const auto& c : novel_classes) {
    if (c.class_id == class_id) return &c;
  }
  return nullptr;
}

void WorldConfig::validate() const {
  if (feature_dim <= 0 || semantic_dim <= 0 || corruption_rank <= 0) {
    throw ConfigError("WorldConfig: dims must be positive");
  }
  if (corruption_rank > feature_dim) {
    throw ConfigError("WorldConfig: corruption_rank must not exceed feature_dim");
  }
  if (base_class_count <= 0 || novel_class_count <= 0) {
    throw ConfigError("WorldConfig: class counts must be positive");
  }
  if (samples_per_base_class <= 0 || shots <= 0) {
    throw ConfigError("WorldConfig: sample counts must be positive");
  }
  if (!(corruption_gain > 0.0)) {
    throw ConfigError("WorldConfig: corruption_gain must be positive");
  }
  if (noise_sigma < 0.0) {
    throw ConfigError("WorldConfig: noise_sigma must be nonnegative");
  }
}

DatasetSplit make_world(const WorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(rng::derive_seed(cfg.seed, 0));

  // World-level maps tying prototypes and corruption bases to the semantics.
  Matrix proto_map(cfg.feature_dim, cfg.semantic_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < cfg.feature_dim; ++i) {
    for (int j = 0; j < cfg.semantic_dim; ++j) proto_map(i, j) = normal(rng);
  }
  // Corruption directions live inside the span of the prototype map, so a
  // truncated crop drifts toward other classes instead of into inert
  // dimensions; this is what makes low-IoU crops genuinely confusable.
  Matrix mix(cfg.semantic_dim, cfg.corruption_rank);
  for (int i = 0; i < cfg.semantic_dim; ++i) {
    for (int j = 0; j < cfg.corruption_rank; ++j) mix(i, j) = normal(rng);
  }
  const Matrix shared_basis = orthonormalize(proto_map * mix);
  std::vector<Matrix> basis_maps;
  for (int r = 0; r < cfg.corruption_rank; ++r) {
    Matrix q(cfg.feature_dim, cfg.semantic_dim);
    for (int i = 0; i < cfg.feature_dim; ++i) {
      for (int j = 0; j < cfg.semantic_dim; ++j) q(i, j) = normal(rng);
    }
    basis_maps.push_back(std::move(q));
  }

  const int total = cfg.base_class_count + cfg.novel_class_count;
  std::vector<Vector> semantics;

  if (cfg.embedding_file) {
    auto loaded = load_embeddings(*cfg.embedding_file);
    if (static_cast<int>(loaded.size()) < total) {
      throw DataError("embedding file has " + std::to_string(loaded.size()) +
                      " entries, world needs " + std::to_string(total));
    }
    for (int i = 0; i < total; ++i) {
      if (loaded[i].second.size() != cfg.semantic_dim) {
        throw DataError("embedding dim mismatch: file has " +
                        std::to_string(loaded[i].second.size()) + ", config wants " +
                        std::to_string(cfg.semantic_dim));
      }
      semantics.push_back(loaded[i].second);
    }
  } else {
    for (int i = 0; i < total; ++i) {
      Vector candidate;
      bool ok = false;
      for (int tries = 0; tries < 1000 && !ok; ++tries) {
        candidate = rng::unit(cfg.semantic_dim, rng);
        ok = true;
        for (const auto& prev : semantics) {
          if (std::abs(prev.dot(candidate)) >= 0.95) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) {
        throw SamplingError("make_world: could not place semantic vector " +
                            std::to_string(i) + " with pairwise |cos| < 0.95");
      }
      semantics.push_back(candidate);
    }
  }

  DatasetSplit split;
  split.shots = static_cast<std::uint32_t>(cfg.shots);
  for (int i = 0; i < cfg.base_class_count; ++i) {
    split.base_classes.push_back(build_class(static_cast<std::uint32_t>(i),
                                             semantics[i], proto_map, shared_basis,
                                             basis_maps, cfg.noise_sigma));
  }
  for (int i = 0; i < cfg.novel_class_count; ++i) {
    const int id = cfg.base_class_count + i;
    split.novel_classes.push_back(build_class(static_cast<std::uint32_t>(id),
                                              semantics[id], proto_map, shared_basis,
                                              basis_maps, cfg.noise_sigma));
  }
  return split;
}

CropSample sample_crop_feature(const ClassSpec& cls, double iou, double gain,
                               std::mt19937_64& rng) {
  if (!(iou >= 0.5 && iou <= 1.0)) {
    throw ConfigError("sample_crop_feature: IoU " + std::to_string(iou) +
                      " outside [0.5, 1]");
  }

  const int dim_d = static_cast<int>(cls.prototype.size());
  const int dim_r = static_cast<int>(cls.crop_basis.cols());

  const Vector direction = rng::unit(dim_r, rng);
  Vector feature = cls.prototype + gain * (1.0 - iou) * (cls.crop_basis * direction);
  if (cls.noise_sigma > 0.0) {
    feature += cls.noise_sigma * rng::gaussian(dim_d, rng);
  }

  const geometry::BoundingBox gt(0.0, 0.0, 1.0, 1.0);
  if (iou >= 1.0) {
    // Ground-truth crop, no jitter.
    return {std::move(feature), cls.class_id, 1.0, gt};
  }

  geometry::JitterConfig jc;
  jc.max_shift_frac =
      std::clamp(1.1 * (1.0 - iou) / (1.0 + iou), 0.005, 0.45);
  jc.min_iou = std::max(0.5, iou - 0.02);
  jc.max_attempts = 500;
  for (int attempt = 0; attempt < 2000; ++attempt) {
    const auto jb = geometry::jitter_box(gt, jc, rng);
    if (jb.iou_score <= iou + 0.02) {
      return {std::move(feature), cls.class_id, jb.iou_score, jb.box};
    }
  }
  throw SamplingError("sample_crop_feature: could not hit IoU " +
                      std::to_string(iou) + " within 0.02");
}

void build_base_dataset(const WorldConfig& cfg, DatasetSplit& split) {
  cfg.validate();
  std::mt19937_64 rng(rng::derive_seed(cfg.seed, 1));
  std::uniform_real_distribution<double> iou_dist(0.5, 1.0);
  split.base_samples.clear();
  split.base_samples.reserve(static_cast<std::size_t>(cfg.base_class_count) *
                             cfg.samples_per_base_class);
  for (const auto& cls : split.base_classes) {
    for (int i = 0; i < cfg.samples_per_base_class; ++i) {
      split.base_samples.push_back(
          sample_crop_feature(cls, iou_dist(rng), cfg.corruption_gain, rng));
    }
  }
}

void build_novel_kshot(const WorldConfig& cfg, DatasetSplit& split) {
  cfg.validate();
  std::mt19937_64 rng(rng::derive_seed(cfg.seed, 2));
  split.novel_samples.clear();
  split.novel_samples.reserve(static_cast<std::size_t>(cfg.novel_class_count) *
                              cfg.shots);
  for (const auto& cls : split.novel_classes) {
    for (int k = 0; k < cfg.shots; ++k) {
      split.novel_samples.push_back(
          sample_crop_feature(cls, 1.0, cfg.corruption_gain, rng));
    }
  }
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
  if (split.base_classes.empty() || split.novel_classes.empty()) {
    throw DataError("save_dataset: split has no classes");
  }
  const int dim_d = static_cast<int>(split.base_classes.front().prototype.size());
  const int dim_s = static_cast<int>(split.base_classes.front().semantic.size());
  const int dim_r = static_cast<int>(split.base_classes.front().crop_basis.cols());
  const std::uint32_t per_class =
      split.base_samples.empty()
          ? 0
          : static_cast<std::uint32_t>(split.base_samples.size() /
                                       split.base_classes.size());

  io::Writer w;
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(static_cast<std::uint32_t>(dim_d));
  w.u32(static_cast<std::uint32_t>(dim_s));
  w.u32(static_cast<std::uint32_t>(dim_r));
  w.u32(split.shots);
  w.u32(static_cast<std::uint32_t>(split.base_classes.size()));
  w.u32(static_cast<std::uint32_t>(split.novel_classes.size()));
  w.u32(per_class);
  w.u32(static_cast<std::uint32_t>(split.base_samples.size()));
  w.u32(static_cast<std::uint32_t>(split.novel_samples.size()));

  for (const auto& c : split.base_classes) write_class(w, c);
  for (const auto& c : split.novel_classes) write_class(w, c);
  for (const auto& s : split.base_samples) write_sample(w, s);
  for (const auto& s : split.novel_samples) write_sample(w, s);

  io::write_file_atomic(path, w.buffer());
}

DatasetSplit load_dataset(const std::filesystem::path& path) {
  io::Reader r(io::read_file(path));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
    throw DataError("dataset magic mismatch in " + path.string());
  }
  const int dim_d = static_cast<int>(r.u32());
  const int dim_s = static_cast<int>(r.u32());
  const int dim_r = static_cast<int>(r.u32());
  const std::uint32_t shots = r.u32();
  const std::uint32_t n_base_classes = r.u32();
  const std::uint32_t n_novel_classes = r.u32();
  const std::uint32_t per_class = r.u32();
  const std::uint32_t n_base_samples = r.u32();
  const std::uint32_t n_novel_samples = r.u32();

  if (dim_d <= 0 || dim_s <= 0 || dim_r <= 0 || n_base_classes == 0 ||
      n_novel_classes == 0) {
    throw DataError("dataset header has non-positive dims or class counts");
  }
  if (n_base_samples != per_class * n_base_classes) {
    throw DataError("dataset header: base sample count " +
                    std::to_string(n_base_samples) + " != " +
                    std::to_string(per_class) + " x " +
                    std::to_string(n_base_classes));
  }
  if (n_novel_samples != shots * n_novel_classes) {
    throw DataError("dataset header: novel sample count " +
                    std::to_string(n_novel_samples) + " != " +
                    std::to_string(shots) + " x " + std::to_string(n_novel_classes));
  }

  DatasetSplit split;
  split.shots = shots;
  for (std::uint32_t i = 0; i < n_base_classes; ++i) {
    split.base_classes.push_back(read_class(r, dim_d, dim_s, dim_r));
  }
  for (std::uint32_t i = 0; i < n_novel_classes; ++i) {
    split.novel_classes.push_back(read_class(r, dim_d, dim_s, dim_r));
  }
  for (std::uint32_t i = 0; i < n_base_samples; ++i) {
    split.base_samples.push_back(read_sample(r, dim_d));
  }
  for (std::uint32_t i = 0; i < n_novel_samples; ++i) {
    split.novel_samples.push_back(read_sample(r, dim_d));
  }
  if (!r.at_end()) {
    throw DataError("dataset has " + std::to_string(r.remaining()) +
                    " trailing bytes at offset " + std::to_string(r.offset()));
  }

  // Base and novel class-id sets must be disjoint.
  for (const auto& b : split.base_classes) {
    for (const auto& n : split.novel_classes) {
      if (b.class_id == n.class_id) {
        throw DataError("dataset: class id " + std::to_string(b.class_id) +
                        " appears in both base and novel sets");
      }
    }
  }
  return split;
}

std::vector<std::pair<std::uint32_t, Vector>> load_embeddings(
    const std::filesystem::path& path) {
  io::Reader r(io::read_file(path));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0) {
    throw DataError("embedding magic mismatch in " + path.string());
  }
  const int dim_s = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  if (dim_s <= 0) {
    throw DataError("embedding header has non-positive dim");
  }
  std::vector<std::pair<std::uint32_t, Vector>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t id = r.u32();
    Vector v(dim_s);
    for (int j = 0; j < dim_s; ++j) v(j) = r.f64();
    const double n = v.norm();
    if (n < 1e-10) {
      throw DataError("embedding " + std::to_string(id) + " has near-zero norm");
    }
    out.emplace_back(id, v / n);
  }
  if (!r.at_end()) {
    throw DataError("embedding file has trailing bytes");
  }
  return out;
}

void save_embeddings(const std::vector<std::pair<std::uint32_t, Vector>>& embs,
                     const std::filesystem::path& path) {
  if (embs.empty()) {
    throw DataError("save_embeddings: empty embedding list");
  }
  io::Writer w;
  w.bytes(kEmbeddingMagic, sizeof kEmbeddingMagic);
  w.u32(static_cast<std::uint32_t>(embs.front().second.size()));
  w.u32(static_cast<std::uint32_t>(embs.size()));
  for (const auto& [id, v] : embs) {
    w.u32(id);
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
  }
  io::write_file_atomic(path, w.buffer());
}

}  // namespace cropdiv::synthworld
