#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cropdiv/normvae.hpp"
#include "cropdiv/synthworld.hpp"
#include "cropdiv/types.hpp"

namespace cropdiv::evalharness {

enum class SourceTag {
  None,
  VanillaVae,
  NormVae,
  LowIouSubset,
  HighIouSubset,
};

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& name);

struct AugmentedFeature {
  std::uint32_t class_id = 0;
  Vector feature;
  double beta = 0.0;
};

struct AugmentationSource {
  SourceTag tag = SourceTag::None;
  std::vector<AugmentedFeature> features;
};

/// Linear softmax head over D-dim features, one row per novel class.
struct ClassifierParams {
  Matrix weights;  // C x D
  Vector biases;   // C
  std::vector<std::uint32_t> class_ids;

  /// Softmax probabilities for one feature, aligned with class_ids.
  Vector probabilities(const Vector& feature) const;
};

struct ClassifierHyper {
  double lr = 0.05;
  int epochs = 300;  // full-batch iterations
};

/// Per-IoU-bin accuracy and mean ground-truth-class probability.
struct RobustnessReport {
  SourceTag source = SourceTag::None;
  std::uint64_t seed = 0;
  std::vector<double> iou_grid;  // strictly decreasing
  std::vector<double> accuracy;
  std::vector<double> mean_true_prob;
  std::vector<int> sample_count;

  double accuracy_at(double iou) const;
  /// Sample-weighted accuracy over grid bins with iou in [lo, hi].
  double bin_accuracy(double lo, double hi) const;
};

struct SourceSummary {
  SourceTag source = SourceTag::None;
  double mean_accuracy_drop = 0.0;  // accuracy(1.0) - accuracy(0.5)
  double mean_prob_drop = 0.0;
  double mean_hard_bin_accuracy = 0.0;  // iou in [0.5, 0.75)
  double mean_easy_bin_accuracy = 0.0;  // iou in [0.75, 1.0]
  std::vector<double> per_seed_accuracy_drop;
  std::vector<double> per_seed_hard_bin;
  std::vector<double> per_seed_easy_bin;
};

struct ExperimentSummary {
  std::vector<RobustnessReport> reports;  // ordered by (source, seed)
  std::vector<SourceSummary> summaries;
};

struct EvalConfig {
  double grid_start = 1.0;
  double grid_stop = 0.5;
  double grid_step = 0.05;
  int samples_per_bin = 500;
  ClassifierHyper classifier;

  std::vector<double> grid() const;
  void validate() const;
};

/// Pools the K-shot novel samples with the source's generated features and
/// trains the softmax head with Adam. Deterministic per seed.
ClassifierParams train_classifier(const synthworld::DatasetSplit& split,
                                  const AugmentationSource& aug,
                                  const ClassifierHyper& hyper, std::uint64_t seed);

/// Draws fresh novel-class crops at each grid IoU and scores them.
RobustnessReport eval_robustness(const ClassifierParams& params,
                                 const synthworld::WorldConfig& world,
                                 const synthworld::DatasetSplit& split,
                                 const std::vector<double>& grid, int n_per_bin,
                                 std::uint64_t seed);

/// Generated features for every novel class from a trained checkpoint.
/// The subset tags keep only the top or bottom 30% of the beta schedule.
AugmentationSource build_source(SourceTag tag, const normvae::VaeParams& checkpoint,
                                const synthworld::DatasetSplit& split,
                                int per_class, std::uint64_t seed);

/// Trains one classifier per (source, seed) cell, evaluates robustness, and
/// aggregates drops and hard/easy-bin accuracies. Parallel across cells up to
/// max_threads; results are identical for any thread count.
ExperimentSummary run_comparison(const synthworld::WorldConfig& world,
                                 const synthworld::DatasetSplit& split,
                                 const std::vector<AugmentationSource>& sources,
                                 const std::vector<std::uint64_t>& seeds,
                                 const EvalConfig& cfg, int max_threads = 1);

/// Low-IoU (large-norm) vs high-IoU (small-norm) generated subsets from the
/// same checkpoint.
ExperimentSummary subset_experiment(const synthworld::WorldConfig& world,
                                    const synthworld::DatasetSplit& split,
                                    const normvae::VaeParams& checkpoint,
                                    int per_class, std::uint64_t generation_seed,
                                    const std::vector<std::uint64_t>& seeds,
                                    const EvalConfig& cfg, int max_threads = 1);

enum class ReportFormat { Csv, Json };

void export_report(const ExperimentSummary& summary,
                   const std::filesystem::path& path, ReportFormat format);
/// Reads back a JSON report written by export_report.
ExperimentSummary load_report_json(const std::filesystem::path& path);

}  // namespace cropdiv::evalharness
