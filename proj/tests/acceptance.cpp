// Acceptance battery for the full pipeline. Runs the library checks first,
// then drives the real CLI binary (argv[1]) through complete pipeline runs
// and scores the resulting reports. One line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cropdiv/evalharness.hpp"
#include "cropdiv/geometry.hpp"
#include "cropdiv/gradcheck.hpp"
#include "cropdiv/io.hpp"
#include "cropdiv/normvae.hpp"
#include "cropdiv/rng.hpp"
#include "cropdiv/synthworld.hpp"
#include "cropdiv/types.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cropdiv;

constexpr double kNormRelTol = 1e-9;
constexpr double kCosineTol = 1e-12;
constexpr double kIouTol = 1e-12;
constexpr double kGradSuiteBudgetSec = 30.0;
constexpr double kTrainingBudgetSec = 120.0;
constexpr double kEvalBudgetSec = 300.0;
constexpr double kPipelineBudgetSec = 600.0;

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %-28s %s\n", pass ? "PASS" : "FAIL", index, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

int run_cmd(const std::string& cmd) { return std::system(cmd.c_str()); }

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = gradcheck::run_suite();
  const double elapsed = seconds_since(t0);
  bool pass = gradcheck::all_passed(results) && results.size() == 5 &&
              elapsed < kGradSuiteBudgetSec;
  double worst = 0.0;
  for (const auto& r : results) worst = std::max(worst, r.max_rel_error);
  char detail[128];
  std::snprintf(detail, sizeof detail, "worst rel err %.2e, %.1f s", worst,
                elapsed);
  report(1, "gradient suite", pass, detail);
}

// ---------------------------------------------------------------- criterion 2

void criterion_norm_contract() {
  bool pass = true;
  std::string detail;

  const normvae::GMap g16 = normvae::GMap::inverse_default(16);
  if (g16.value(1.0) != 4.0 || g16.value(0.5) != 20.0) {
    pass = false;
    detail += "N=16 endpoints not exact; ";
  }
  const normvae::GMap g512 = normvae::GMap::inverse_default(512);
  const double root512 = std::sqrt(512.0);
  if (std::abs(g512.value(1.0) - root512) > 1e-12 * root512 ||
      std::abs(g512.value(0.5) - 5.0 * root512) > 1e-12 * root512) {
    pass = false;
    detail += "N=512 endpoints off; ";
  }

  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> iou_dist(0.5, 1.0);
  double worst_norm = 0.0, worst_cos = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const int n = (i % 2 == 0) ? 16 : 512;
    const normvae::GMap& g = (n == 16) ? g16 : g512;
    const Vector z = rng::gaussian(n, gen);
    const double s = iou_dist(gen);
    const Vector out = normvae::rescale_latent(z, s, g);
    worst_norm = std::max(worst_norm,
                          std::abs(out.norm() - g.value(s)) / g.value(s));
    const double cosine = z.dot(out) / (z.norm() * out.norm());
    worst_cos = std::max(worst_cos, std::abs(cosine - 1.0));
  }
  if (worst_norm > kNormRelTol || worst_cos > kCosineTol) pass = false;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%snorm err %.1e, cos err %.1e", detail.c_str(),
                worst_norm, worst_cos);
  report(2, "latent norm contract", pass, buf);
}

// ---------------------------------------------------------------- criterion 3

void criterion_iou_oracle() {
  using geometry::BoundingBox;
  bool pass = true;

  const BoundingBox unit(0.0, 0.0, 1.0, 1.0);
  if (geometry::iou(unit, unit) != 1.0) pass = false;
  if (geometry::iou(unit, BoundingBox(5.0, 5.0, 6.0, 6.0)) != 0.0) pass = false;
  if (geometry::iou(BoundingBox(0.0, 0.0, 2.0, 2.0),
                    BoundingBox(1.0, 1.0, 3.0, 3.0)) != 1.0 / 7.0) {
    pass = false;
  }

  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> pos(-4.0, 4.0);
  std::uniform_real_distribution<double> len(0.2, 3.0);
  std::uniform_real_distribution<double> shift(-7.0, 7.0);
  std::uniform_real_distribution<double> scale(0.25, 4.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double ax = pos(gen), ay = pos(gen);
    const BoundingBox a(ax, ay, ax + len(gen), ay + len(gen));
    const double bx = pos(gen), by = pos(gen);
    const BoundingBox b(bx, by, bx + len(gen), by + len(gen));
    const double v = geometry::iou(a, b);
    worst = std::max(worst, std::abs(geometry::iou(b, a) - v));

    const double dx = shift(gen), dy = shift(gen), c = scale(gen);
    const BoundingBox at(a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy);
    const BoundingBox bt(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy);
    worst = std::max(worst, std::abs(geometry::iou(at, bt) - v));
    const BoundingBox as(c * a.x1, c * a.y1, c * a.x2, c * a.y2);
    const BoundingBox bs(c * b.x1, c * b.y1, c * b.x2, c * b.y2);
    worst = std::max(worst, std::abs(geometry::iou(as, bs) - v));
  }
  if (worst > kIouTol) pass = false;
  char buf[96];
  std::snprintf(buf, sizeof buf, "worst invariance err %.1e", worst);
  report(3, "iou oracle", pass, buf);
}

// ---------------------------------------------------------------- criterion 4

void criterion_training_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const synthworld::WorldConfig wc;  // default desk world
  auto split = synthworld::make_world(wc);
  synthworld::build_base_dataset(wc, split);

  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    for (normvae::Mode mode : {normvae::Mode::Vanilla, normvae::Mode::Norm}) {
      normvae::VaeConfig cfg;
      cfg.epochs = 10;
      cfg.mode = mode;
      const auto result =
          normvae::train(normvae::VaeParams::init(cfg, seed), split, seed);
      if (result.epoch_loss.size() != 10 ||
          !(result.epoch_loss[9] < result.epoch_loss[0])) {
        pass = false;
        detail += "no loss decrease (seed " + std::to_string(seed) + "); ";
      }
      for (double kl : result.epoch_kl) {
        if (!(kl >= 0.0)) {
          pass = false;
          detail += "negative KL; ";
          break;
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= kTrainingBudgetSec) pass = false;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s3 seeds x 2 modes, %.1f s", detail.c_str(),
                elapsed);
  report(4, "training sanity", pass, buf);
}

// ----------------------------------------------------- pipeline runs (6..10)

struct PipelineRuns {
  fs::path dir1, dir2, dir3;
  double run1_seconds = 0.0;
  bool ok = false;
};

PipelineRuns run_pipelines(const std::string& binary, const fs::path& work) {
  PipelineRuns runs;
  runs.dir1 = work / "run1";
  runs.dir2 = work / "run2";
  runs.dir3 = work / "run3";
  const fs::path cfg = work / "default.json";
  if (run_cmd("\"" + binary + "\" --emit-config > \"" + cfg.string() + "\"") !=
      0) {
    return runs;
  }
  const auto launch = [&](const fs::path& dir, int threads) {
    fs::create_directories(dir);
    const std::string cmd = "cd \"" + dir.string() + "\" && CROPDIV_THREADS=" +
                            std::to_string(threads) + " \"" + binary +
                            "\" --config \"" + cfg.string() +
                            "\" pipeline > pipeline.log 2>&1";
    return run_cmd(cmd) == 0;
  };

  const auto t0 = std::chrono::steady_clock::now();
  if (!launch(runs.dir1, 1)) return runs;
  runs.run1_seconds = seconds_since(t0);
  if (!launch(runs.dir2, 1)) return runs;
  if (!launch(runs.dir3, 4)) return runs;
  runs.ok = true;
  return runs;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && io::read_file(a) == io::read_file(b);
}

// ---------------------------------------------------------------- criterion 5

void criterion_beta_difficulty(const PipelineRuns& runs) {
  if (!runs.ok) {
    report(5, "beta controls difficulty", false, "pipeline run failed");
    return;
  }
  const auto split =
      synthworld::load_dataset(runs.dir1 / "out" / "world.cdds");
  const auto ckpt =
      normvae::load_checkpoint(runs.dir1 / "out" / "norm.nvae");
  const double root = std::sqrt(static_cast<double>(ckpt.config.latent_dim));

  bool pass = true;
  std::string detail;
  for (const auto& cls : split.novel_classes) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      double mean_far = 0.0, mean_near = 0.0;
      for (double beta : {5.0 * root, 1.0 * root}) {
        normvae::GenerationRequest req;
        req.semantic = cls.semantic;
        req.count = 200;
        req.beta_schedule = {beta};
        req.seed = 1000 * seed + cls.class_id + (beta > 2.0 * root ? 1 : 0);
        double sum = 0.0;
        for (const auto& gf : normvae::generate(ckpt, req)) {
          sum += (gf.feature - cls.prototype).norm();
        }
        (beta > 2.0 * root ? mean_far : mean_near) = sum / 200.0;
      }
      if (mean_far > mean_near) ++wins;
    }
    if (wins < 4) {
      pass = false;
      detail += "class " + std::to_string(cls.class_id) + " only " +
                std::to_string(wins) + "/5; ";
    }
  }
  if (detail.empty()) detail = "all novel classes, >= 4/5 seeds";
  report(5, "beta controls difficulty", pass, detail);
}

// ------------------------------------------------------------ criteria 6 to 8

const evalharness::SourceSummary* find_summary(
    const evalharness::ExperimentSummary& summary, evalharness::SourceTag tag) {
  for (const auto& s : summary.summaries) {
    if (s.source == tag) return &s;
  }
  return nullptr;
}

void criteria_report_battery(const PipelineRuns& runs) {
  using evalharness::SourceTag;
  if (!runs.ok) {
    report(6, "accuracy drop ordering", false, "pipeline run failed");
    report(7, "hard-bin ordering", false, "pipeline run failed");
    report(8, "subset specialization", false, "pipeline run failed");
    return;
  }
  const auto summary =
      evalharness::load_report_json(runs.dir1 / "out" / "report.json");
  const auto* none = find_summary(summary, SourceTag::None);
  const auto* vanilla = find_summary(summary, SourceTag::VanillaVae);
  const auto* norm = find_summary(summary, SourceTag::NormVae);
  const auto* low = find_summary(summary, SourceTag::LowIouSubset);
  const auto* high = find_summary(summary, SourceTag::HighIouSubset);
  if (!none || !vanilla || !norm || !low || !high) {
    report(6, "accuracy drop ordering", false, "missing summaries in report");
    report(7, "hard-bin ordering", false, "missing summaries in report");
    report(8, "subset specialization", false, "missing summaries in report");
    return;
  }

  // 6: per seed, the unaugmented drop is positive and the norm-mode drop is
  //    strictly smaller than the vanilla drop; required in >= 4 of 5 seeds,
  //    with the eval battery inside the pipeline budgeted at 5 minutes.
  {
    const std::size_t n = none->per_seed_accuracy_drop.size();
    int good = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (none->per_seed_accuracy_drop[i] > 0.0 &&
          norm->per_seed_accuracy_drop[i] < vanilla->per_seed_accuracy_drop[i]) {
        ++good;
      }
    }
    const bool pass =
        n == 5 && good >= 4 && runs.run1_seconds < kEvalBudgetSec;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%d/%zu seeds (mean drops none %+.3f vanilla %+.3f norm %+.3f)",
                  good, n, none->mean_accuracy_drop,
                  vanilla->mean_accuracy_drop, norm->mean_accuracy_drop);
    report(6, "accuracy drop ordering", pass, buf);
  }

  // 7: mean hard-bin accuracy orders norm >= vanilla >= none.
  {
    const bool pass =
        norm->mean_hard_bin_accuracy >= vanilla->mean_hard_bin_accuracy &&
        vanilla->mean_hard_bin_accuracy >= none->mean_hard_bin_accuracy;
    char buf[128];
    std::snprintf(buf, sizeof buf, "norm %.4f >= vanilla %.4f >= none %.4f",
                  norm->mean_hard_bin_accuracy, vanilla->mean_hard_bin_accuracy,
                  none->mean_hard_bin_accuracy);
    report(7, "hard-bin ordering", pass, buf);
  }

  // 8: per seed, the large-norm subset wins the hard bin and the small-norm
  //    subset wins the easy bin, each in a majority of the 5 seeds.
  {
    const std::size_t n = low->per_seed_hard_bin.size();
    int hard_wins = 0, easy_wins = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (low->per_seed_hard_bin[i] > high->per_seed_hard_bin[i]) ++hard_wins;
      if (high->per_seed_easy_bin[i] > low->per_seed_easy_bin[i]) ++easy_wins;
    }
    const bool pass = n == 5 && 2 * hard_wins > static_cast<int>(n) &&
                      2 * easy_wins > static_cast<int>(n);
    char buf[96];
    std::snprintf(buf, sizeof buf, "hard %d/%zu, easy %d/%zu", hard_wins, n,
                  easy_wins, n);
    report(8, "subset specialization", pass, buf);
  }
}

// ---------------------------------------------------------------- criterion 9

void criterion_determinism(const PipelineRuns& runs) {
  if (!runs.ok) {
    report(9, "determinism", false, "pipeline run failed");
    return;
  }
  const char* artifacts[] = {"world.cdds",  "vanilla.nvae", "norm.nvae",
                             "report.json", "report.csv"};
  bool pass = true;
  std::string detail;
  for (const char* name : artifacts) {
    const fs::path rel = fs::path("out") / name;
    if (!same_bytes(runs.dir1 / rel, runs.dir2 / rel)) {
      pass = false;
      detail += std::string(name) + " differs across runs; ";
    }
    if (!same_bytes(runs.dir1 / rel, runs.dir3 / rel)) {
      pass = false;
      detail += std::string(name) + " differs across thread counts; ";
    }
  }
  if (detail.empty()) detail = "5 artifacts byte-identical (reruns, 1 vs 4 threads)";
  report(9, "determinism", pass, detail);
}

// --------------------------------------------------------------- criterion 10

void criterion_budget(const PipelineRuns& runs) {
  const bool pass = runs.ok && runs.run1_seconds < kPipelineBudgetSec;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f s (budget %.0f s)", runs.run1_seconds,
                kPipelineBudgetSec);
  report(10, "end-to-end budget", pass, buf);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-cropdiv-binary>\n");
    return 2;
  }
  const std::string binary = fs::absolute(argv[1]).string();
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);

  criterion_gradients();
  criterion_norm_contract();
  criterion_iou_oracle();
  criterion_training_sanity();

  const PipelineRuns runs = run_pipelines(binary, work);
  criterion_beta_difficulty(runs);
  criteria_report_battery(runs);
  criterion_determinism(runs);
  criterion_budget(runs);

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
