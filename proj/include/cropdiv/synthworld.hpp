#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cropdiv/geometry.hpp"
#include "cropdiv/types.hpp"

namespace cropdiv::synthworld {

/// A class's semantic embedding plus the generative parameters that produce
/// its crop features. Prototype and corruption basis are deterministic
/// functions of the semantic vector so a model conditioned on the semantics
/// of base classes can generalize to novel ones.
struct ClassSpec {
  std::uint32_t class_id = 0;
  Vector semantic;    // unit norm, dim S
  Vector prototype;   // dim D, clean-feature center
  Matrix crop_basis;  // D x R, orthonormal columns
  double noise_sigma = 0.0;
};

/// A feature vector standing in for an RoI feature, with its class, box
/// and IoU score.
struct CropSample {
  Vector feature;  // dim D
  std::uint32_t class_id = 0;
  double iou = 1.0;  // in [0.5, 1]
  geometry::BoundingBox box{0.0, 0.0, 1.0, 1.0};
};

struct DatasetSplit {
  std::vector<ClassSpec> base_classes;
  std::vector<ClassSpec> novel_classes;
  std::vector<CropSample> base_samples;
  std::vector<CropSample> novel_samples;  // K ground-truth shots per class
  std::uint32_t shots = 0;

  const ClassSpec* find_class(std::uint32_t class_id) const;
};

struct WorldConfig {
  int feature_dim = 64;     // D
  int semantic_dim = 16;    // S
  int corruption_rank = 4;  // R
  int base_class_count = 20;
  int novel_class_count = 5;
  int samples_per_base_class = 200;
  int shots = 5;  // K
  double corruption_gain = 8.0;
  double noise_sigma = 0.4;
  std::uint64_t seed = 0;
  /// Optional file with externally supplied semantic embeddings.
  std::optional<std::string> embedding_file;

  void validate() const;
};

/// Builds the class skeletons (no samples). Semantic vectors are seeded
/// random unit vectors, resampled until every pair has |cosine| < 0.95.
DatasetSplit make_world(const WorldConfig& cfg);

/// Draws one crop feature at the given IoU:
///   feature = prototype + gain * (1 - iou) * (crop_basis * d) + sigma * eta
/// with d a random unit vector in R dims and eta standard normal in D dims.
/// The box is jittered around the unit box until its IoU is within 0.02 of
/// the request; the achieved value is stored.
CropSample sample_crop_feature(const ClassSpec& cls, double iou, double gain,
                               std::mt19937_64& rng);

/// Base samples at IoUs uniform in [0.5, 1], samples_per_base_class each.
void build_base_dataset(const WorldConfig& cfg, DatasetSplit& split);

/// Exactly K ground-truth shots (IoU = 1) per novel class.
void build_novel_kshot(const WorldConfig& cfg, DatasetSplit& split);

void save_dataset(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_dataset(const std::filesystem::path& path);

/// Embedding file: magic "CDIVEMB1", u32 S, u32 count, then count records of
/// (u32 class_id, S x f64). Vectors are normalized on load.
std::vector<std::pair<std::uint32_t, Vector>> load_embeddings(
    const std::filesystem::path& path);
void save_embeddings(const std::vector<std::pair<std::uint32_t, Vector>>& embs,
                     const std::filesystem::path& path);

}  // namespace cropdiv::synthworld
