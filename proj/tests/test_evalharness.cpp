#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "cropdiv/evalharness.hpp"
#include "cropdiv/io.hpp"
#include "cropdiv/normvae.hpp"
#include "cropdiv/rng.hpp"
#include "cropdiv/synthworld.hpp"
#include "cropdiv/types.hpp"

using namespace cropdiv;
using namespace cropdiv::evalharness;

namespace {

synthworld::WorldConfig separable_world() {
  synthworld::WorldConfig wc;
  wc.feature_dim = 16;
  wc.semantic_dim = 6;
  wc.corruption_rank = 2;
  wc.base_class_count = 3;
  wc.novel_class_count = 4;
  wc.samples_per_base_class = 10;
  wc.shots = 10;
  wc.corruption_gain = 1e-6;  // crops barely move off the prototype
  wc.noise_sigma = 1e-3;
  wc.seed = 19;
  return wc;
}

synthworld::DatasetSplit build(const synthworld::WorldConfig& wc) {
  auto split = synthworld::make_world(wc);
  synthworld::build_base_dataset(wc, split);
  synthworld::build_novel_kshot(wc, split);
  return split;
}

normvae::VaeParams toy_checkpoint(const synthworld::WorldConfig& wc) {
  normvae::VaeConfig cfg;
  cfg.feature_dim = wc.feature_dim;
  cfg.semantic_dim = wc.semantic_dim;
  cfg.latent_dim = 4;
  cfg.encoder_hidden = {10};
  cfg.decoder_hidden = {10};
  cfg.gmap = normvae::GMap::inverse_default(4);
  return normvae::VaeParams::init(cfg, 41);
}

bool same_classifier(const ClassifierParams& a, const ClassifierParams& b) {
  return a.weights == b.weights && a.biases == b.biases &&
         a.class_ids == b.class_ids;
}

}  // namespace

TEST_CASE("source tags round-trip through their names") {
  for (SourceTag tag : {SourceTag::None, SourceTag::VanillaVae, SourceTag::NormVae,
                        SourceTag::LowIouSubset, SourceTag::HighIouSubset}) {
    CHECK(source_tag_from_string(to_string(tag)) == tag);
  }
  CHECK_THROWS_AS(source_tag_from_string("bogus"), ConfigError);
}

TEST_CASE("classifier separates an easy world") {
  const auto wc = separable_world();
  const auto split = build(wc);
  ClassifierHyper hyper;
  const ClassifierParams params = train_classifier(split, {}, hyper, 0);

  CHECK(params.weights.rows() ==
        static_cast<Eigen::Index>(split.novel_classes.size()));
  CHECK(params.weights.cols() == wc.feature_dim);

  int correct = 0;
  for (const auto& s : split.novel_samples) {
    const Vector probs = params.probabilities(s.feature);
    Eigen::Index top = 0;
    probs.maxCoeff(&top);
    if (params.class_ids[static_cast<std::size_t>(top)] == s.class_id) ++correct;
  }
  const double acc =
      static_cast<double>(correct) / static_cast<double>(split.novel_samples.size());
  CHECK(acc >= 0.99);

  SUBCASE("training is deterministic per seed") {
    CHECK(same_classifier(params, train_classifier(split, {}, hyper, 0)));
  }
  SUBCASE("softmax outputs are a probability distribution") {
    for (const auto& s : split.novel_samples) {
      const Vector probs = params.probabilities(s.feature);
      CHECK(std::abs(probs.sum() - 1.0) <= 1e-9);
      CHECK(probs.minCoeff() >= 0.0);
    }
  }
  SUBCASE("an empty-feature source changes nothing") {
    AugmentationSource empty_vae;
    empty_vae.tag = SourceTag::NormVae;
    const ClassifierParams with_empty =
        train_classifier(split, empty_vae, hyper, 0);
    CHECK(same_classifier(params, with_empty));
  }
}

TEST_CASE("an untrained classifier scores at chance") {
  const auto wc = separable_world();
  const auto split = build(wc);
  const int n_classes = static_cast<int>(split.novel_classes.size());

  ClassifierParams zero;
  zero.weights = Matrix::Zero(n_classes, wc.feature_dim);
  zero.biases = Vector::Zero(n_classes);
  for (const auto& c : split.novel_classes) zero.class_ids.push_back(c.class_id);

  EvalConfig cfg;
  const auto grid = cfg.grid();
  const RobustnessReport r =
      eval_robustness(zero, wc, split, grid, 4 * n_classes * 5, 7);
  const double chance = 1.0 / n_classes;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(r.mean_true_prob[i] == doctest::Approx(chance).epsilon(1e-9));
    // ties resolve to the first class, which appears exactly 1/C of the time
    CHECK(r.accuracy[i] == doctest::Approx(chance).epsilon(1e-12));
  }
}

TEST_CASE("robustness report bin helpers re-aggregate the grid exactly") {
  RobustnessReport r;
  r.iou_grid = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
  r.accuracy = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  r.mean_true_prob = r.accuracy;
  r.sample_count = {10, 10, 20, 10, 10, 10};

  CHECK(r.accuracy_at(1.0) == 0.9);
  CHECK(r.accuracy_at(0.5) == 0.4);
  // [0.5, 0.75): bins 0.7, 0.6, 0.5 with equal weight
  CHECK(r.bin_accuracy(0.5, 0.749999) ==
        doctest::Approx((0.6 + 0.5 + 0.4) / 3.0).epsilon(1e-12));
  // [0.75, 1.0]: 0.9 and 0.8 at weight 10 each, 0.8-bin has weight 20
  CHECK(r.bin_accuracy(0.75, 1.0) ==
        doctest::Approx((0.9 * 10 + 0.8 * 10 + 0.7 * 20) / 40.0).epsilon(1e-12));
}

TEST_CASE("generated subsets partition the beta schedule") {
  const auto wc = separable_world();
  const auto split = build(wc);
  const auto ckpt = toy_checkpoint(wc);
  const int per_class = 20;

  const auto low = build_source(SourceTag::LowIouSubset, ckpt, split, per_class, 3);
  const auto high =
      build_source(SourceTag::HighIouSubset, ckpt, split, per_class, 3);

  const int keep = static_cast<int>(std::ceil(0.3 * per_class));
  const std::size_t classes = split.novel_classes.size();
  CHECK(low.features.size() == classes * static_cast<std::size_t>(keep));
  CHECK(high.features.size() == classes * static_cast<std::size_t>(keep));

  double low_min = 1e300, high_max = -1e300;
  for (const auto& f : low.features) low_min = std::min(low_min, f.beta);
  for (const auto& f : high.features) high_max = std::max(high_max, f.beta);
  // every low-IoU (large norm) beta sits strictly above every high-IoU one
  CHECK(high_max < low_min);

  SUBCASE("full sources carry per_class features per novel class") {
    const auto norm =
        build_source(SourceTag::NormVae, ckpt, split, per_class, 3);
    CHECK(norm.features.size() == classes * static_cast<std::size_t>(per_class));
    const auto vanilla =
        build_source(SourceTag::VanillaVae, ckpt, split, per_class, 3);
    const double natural = std::sqrt(4.0);
    for (const auto& f : vanilla.features) {
      CHECK(f.beta == doctest::Approx(natural).epsilon(1e-12));
    }
  }
}

TEST_CASE("comparison summaries export and reload without loss") {
  const auto wc = separable_world();
  const auto split = build(wc);
  const auto ckpt = toy_checkpoint(wc);

  EvalConfig cfg;
  cfg.grid_step = 0.25;  // 1.0, 0.75, 0.5
  cfg.samples_per_bin = 24;
  cfg.classifier.epochs = 40;

  std::vector<AugmentationSource> sources;
  sources.push_back({SourceTag::None, {}});
  sources.push_back(build_source(SourceTag::NormVae, ckpt, split, 6, 3));
  const std::vector<std::uint64_t> seeds{0, 1};

  const ExperimentSummary summary =
      run_comparison(wc, split, sources, seeds, cfg);
  REQUIRE(summary.reports.size() == 4);
  REQUIRE(summary.summaries.size() == 2);
  for (const auto& s : summary.summaries) {
    CHECK(s.per_seed_accuracy_drop.size() == seeds.size());
    double mean = 0.0;
    for (double d : s.per_seed_hard_bin) mean += d;
    mean /= static_cast<double>(s.per_seed_hard_bin.size());
    CHECK(s.mean_hard_bin_accuracy == doctest::Approx(mean).epsilon(1e-12));
  }

  SUBCASE("thread count does not change the numbers") {
    const ExperimentSummary threaded =
        run_comparison(wc, split, sources, seeds, cfg, 4);
    REQUIRE(threaded.reports.size() == summary.reports.size());
    for (std::size_t i = 0; i < summary.reports.size(); ++i) {
      CHECK(threaded.reports[i].accuracy == summary.reports[i].accuracy);
      CHECK(threaded.reports[i].mean_true_prob ==
            summary.reports[i].mean_true_prob);
    }
  }

  SUBCASE("json export round-trips") {
    const auto dir = std::filesystem::temp_directory_path() / "cropdiv_eval_test";
    std::filesystem::create_directories(dir);
    const auto json_path = dir / "report.json";
    export_report(summary, json_path, ReportFormat::Json);
    const ExperimentSummary back = load_report_json(json_path);

    REQUIRE(back.reports.size() == summary.reports.size());
    for (std::size_t i = 0; i < summary.reports.size(); ++i) {
      CHECK(back.reports[i].source == summary.reports[i].source);
      CHECK(back.reports[i].seed == summary.reports[i].seed);
      CHECK(back.reports[i].iou_grid == summary.reports[i].iou_grid);
      CHECK(back.reports[i].accuracy == summary.reports[i].accuracy);
      CHECK(back.reports[i].mean_true_prob == summary.reports[i].mean_true_prob);
    }
    REQUIRE(back.summaries.size() == summary.summaries.size());
    for (std::size_t i = 0; i < summary.summaries.size(); ++i) {
      CHECK(back.summaries[i].mean_accuracy_drop ==
            summary.summaries[i].mean_accuracy_drop);
      CHECK(back.summaries[i].mean_hard_bin_accuracy ==
            summary.summaries[i].mean_hard_bin_accuracy);
    }

    // the csv carries the same numbers, printed with full precision
    const auto csv_path = dir / "report.csv";
    export_report(summary, csv_path, ReportFormat::Csv);
    const auto bytes = io::read_file(csv_path);
    const std::string csv(bytes.begin(), bytes.end());
    const auto& r0 = summary.reports[0];
    char cell[40];
    std::snprintf(cell, sizeof cell, "%.17g", r0.accuracy[0]);
    CHECK(csv.find(cell) != std::string::npos);
    std::filesystem::remove_all(dir);
  }

  SUBCASE("subset experiment produces one summary per subset") {
    const ExperimentSummary sub =
        subset_experiment(wc, split, ckpt, 6, 3, seeds, cfg);
    REQUIRE(sub.summaries.size() == 2);
    CHECK(sub.summaries[0].source == SourceTag::LowIouSubset);
    CHECK(sub.summaries[1].source == SourceTag::HighIouSubset);
  }
}
