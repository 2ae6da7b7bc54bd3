#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cropdiv/config.hpp"
#include "cropdiv/evalharness.hpp"
#include "cropdiv/gradcheck.hpp"
#include "cropdiv/io.hpp"
#include "cropdiv/normvae.hpp"
#include "cropdiv/synthworld.hpp"
#include "cropdiv/types.hpp"

namespace {

using cropdiv::config::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int eval_threads() {
  const char* env = std::getenv("CROPDIV_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::string checkpoint_path(const RunConfig& cfg, cropdiv::normvae::Mode mode) {
  return mode == cropdiv::normvae::Mode::Norm ? cfg.paths.norm_checkpoint
                                              : cfg.paths.vanilla_checkpoint;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw cropdiv::DataError("required input does not exist: " + path);
  }
}

void run_world(const RunConfig& cfg, const std::optional<std::string>& out) {
  auto split = cropdiv::synthworld::make_world(cfg.world);
  cropdiv::synthworld::build_base_dataset(cfg.world, split);
  cropdiv::synthworld::build_novel_kshot(cfg.world, split);
  const std::string path = out.value_or(cfg.paths.dataset);
  cropdiv::synthworld::save_dataset(split, path);
  std::printf("world: %zu base samples, %zu novel shots -> %s\n",
              split.base_samples.size(), split.novel_samples.size(), path.c_str());
}

void run_train(const RunConfig& cfg, cropdiv::normvae::Mode mode,
               const std::optional<std::string>& out) {
  require_file(cfg.paths.dataset);
  const auto split = cropdiv::synthworld::load_dataset(cfg.paths.dataset);

  cropdiv::normvae::VaeConfig vae_cfg = cfg.vae;
  vae_cfg.mode = mode;
  auto params = cropdiv::normvae::VaeParams::init(vae_cfg, cfg.train_seed);
  auto result = cropdiv::normvae::train(std::move(params), split, cfg.train_seed);

  const std::string ckpt = out.value_or(checkpoint_path(cfg, mode));
  cropdiv::normvae::save_checkpoint(result.params, ckpt);

  std::string curve = "epoch,loss,kl\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    char line[96];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", e + 1,
                  result.epoch_loss[e], result.epoch_kl[e]);
    curve += line;
  }
  const std::string curve_path = mode == cropdiv::normvae::Mode::Norm
                                     ? cfg.paths.loss_curve_norm
                                     : cfg.paths.loss_curve_vanilla;
  cropdiv::io::write_file_atomic(curve_path, curve);

  std::printf("train(%s): %zu epochs, final loss %.6f -> %s\n",
              mode == cropdiv::normvae::Mode::Norm ? "norm" : "vanilla",
              result.epoch_loss.size(),
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(),
              ckpt.c_str());
}

void run_generate(const RunConfig& cfg, cropdiv::normvae::Mode mode,
                  const std::optional<std::string>& out) {
  const std::string ckpt_path = checkpoint_path(cfg, mode);
  require_file(ckpt_path);
  require_file(cfg.paths.dataset);
  const auto params = cropdiv::normvae::load_checkpoint(ckpt_path);
  const auto split = cropdiv::synthworld::load_dataset(cfg.paths.dataset);

  std::vector<const cropdiv::synthworld::ClassSpec*> targets;
  for (const auto& cls : split.novel_classes) {
    if (!cfg.generation.class_id || cls.class_id == *cfg.generation.class_id) {
      targets.push_back(&cls);
    }
  }
  if (targets.empty()) {
    throw cropdiv::ConfigError("generate: no matching novel class");
  }

  const auto schedule =
      cfg.generation.beta_schedule.value_or(cropdiv::normvae::default_beta_schedule(
          params.config.gmap, cfg.generation.count));

  // Generated samples reuse the dataset sample-record layout; the IoU slot
  // carries the g-map preimage of the sampled norm.
  const auto& gmap = params.config.gmap;
  cropdiv::io::Writer w;
  w.bytes("CDIVGN01", 8);
  w.u32(static_cast<std::uint32_t>(params.config.feature_dim));
  w.u32(static_cast<std::uint32_t>(targets.size() *
                                   static_cast<std::size_t>(cfg.generation.count)));
  for (const auto* cls : targets) {
    cropdiv::normvae::GenerationRequest req;
    req.semantic = cls->semantic;
    req.count = cfg.generation.count;
    req.beta_schedule = schedule;
    req.seed = cfg.generation.seed + cls->class_id;
    for (const auto& gf : cropdiv::normvae::generate(params, req)) {
      const double iou =
          std::clamp((gf.beta - gmap.b) / gmap.w, 0.5, 1.0);
      w.u32(cls->class_id);
      w.f64(iou);
      w.f64(0.0);
      w.f64(0.0);
      w.f64(1.0);
      w.f64(1.0);
      for (Eigen::Index i = 0; i < gf.feature.size(); ++i) w.f64(gf.feature(i));
    }
  }
  const std::string path = out.value_or(cfg.paths.generated);
  cropdiv::io::write_file_atomic(path, w.buffer());
  std::printf("generate(%s): %zu classes x %d features -> %s\n",
              mode == cropdiv::normvae::Mode::Norm ? "norm" : "vanilla",
              targets.size(), cfg.generation.count, path.c_str());
}

void run_eval(const RunConfig& cfg, const std::optional<std::string>& out) {
  namespace eh = cropdiv::evalharness;
  require_file(cfg.paths.dataset);
  require_file(cfg.paths.vanilla_checkpoint);
  require_file(cfg.paths.norm_checkpoint);

  const auto split = cropdiv::synthworld::load_dataset(cfg.paths.dataset);
  const auto vanilla = cropdiv::normvae::load_checkpoint(cfg.paths.vanilla_checkpoint);
  const auto norm = cropdiv::normvae::load_checkpoint(cfg.paths.norm_checkpoint);
  const int threads = eval_threads();

  std::vector<eh::AugmentationSource> sources;
  sources.push_back({eh::SourceTag::None, {}});
  sources.push_back(eh::build_source(eh::SourceTag::VanillaVae, vanilla, split,
                                     cfg.generation.count, cfg.generation.seed));
  sources.push_back(eh::build_source(eh::SourceTag::NormVae, norm, split,
                                     cfg.generation.count, cfg.generation.seed));

  auto summary = eh::run_comparison(cfg.world, split, sources, cfg.eval_seeds,
                                    cfg.eval, threads);
  auto subsets = eh::subset_experiment(cfg.world, split, norm, cfg.generation.count,
                                       cfg.generation.seed, cfg.eval_seeds,
                                       cfg.eval, threads);
  for (auto& r : subsets.reports) summary.reports.push_back(std::move(r));
  for (auto& s : subsets.summaries) summary.summaries.push_back(std::move(s));

  const std::string json_path = out.value_or(cfg.paths.report_json);
  eh::export_report(summary, json_path, eh::ReportFormat::Json);
  eh::export_report(summary, cfg.paths.report_csv, eh::ReportFormat::Csv);

  for (const auto& s : summary.summaries) {
    std::printf("eval: %-16s drop=%+.4f hard=%.4f easy=%.4f\n",
                eh::to_string(s.source).c_str(), s.mean_accuracy_drop,
                s.mean_hard_bin_accuracy, s.mean_easy_bin_accuracy);
  }
  std::printf("eval: report -> %s, %s\n", json_path.c_str(),
              cfg.paths.report_csv.c_str());
}

int run_gradcheck() {
  const auto results = cropdiv::gradcheck::run_suite();
  for (const auto& r : results) {
    std::printf("[%s] %-18s max rel err %.3e (tol %.0e)\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_rel_error,
                r.tolerance);
  }
  return cropdiv::gradcheck::all_passed(results) ? 0 : kExitNumeric;
}

void run_pipeline(const RunConfig& cfg) {
  run_world(cfg, std::nullopt);
  run_train(cfg, cropdiv::normvae::Mode::Vanilla, std::nullopt);
  run_train(cfg, cropdiv::normvae::Mode::Norm, std::nullopt);
  run_eval(cfg, std::nullopt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Norm-controlled VAE feature generation test bench"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string mode_name = "norm";
  bool emit_config = false;

  app.add_flag("--emit-config", emit_config,
               "print the default config JSON and exit");
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--seed", seed, "override every seed in the config");
  app.add_option("--out", out, "override the command's primary output path");
  app.add_option("--mode", mode_name, "VAE mode")
      ->check(CLI::IsMember({"vanilla", "norm"}));

  auto* cmd_world = app.add_subcommand("world", "build and save a dataset");
  auto* cmd_train = app.add_subcommand("train", "train a VAE checkpoint");
  auto* cmd_generate = app.add_subcommand("generate", "synthesize features");
  auto* cmd_eval = app.add_subcommand("eval", "run the comparison battery");
  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "verify all gradients");
  auto* cmd_pipeline = app.add_subcommand("pipeline", "world+train+eval end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (emit_config) {
    std::fputs(cropdiv::config::default_config_text().c_str(), stdout);
    return 0;
  }

  try {
    if (cmd_gradcheck->parsed()) {
      return run_gradcheck();
    }
    if (app.get_subcommands().empty()) {
      throw cropdiv::ConfigError("a subcommand is required");
    }
    if (config_path.empty()) {
      throw cropdiv::ConfigError("--config is required");
    }
    RunConfig cfg = cropdiv::config::parse_config_file(config_path);
    if (seed) cfg.override_seeds(*seed);
    const auto mode = mode_name == "norm" ? cropdiv::normvae::Mode::Norm
                                          : cropdiv::normvae::Mode::Vanilla;

    if (cmd_world->parsed()) {
      run_world(cfg, out);
    } else if (cmd_train->parsed()) {
      run_train(cfg, mode, out);
    } else if (cmd_generate->parsed()) {
      run_generate(cfg, mode, out);
    } else if (cmd_eval->parsed()) {
      run_eval(cfg, out);
    } else if (cmd_pipeline->parsed()) {
      run_pipeline(cfg);
    }
  } catch (const cropdiv::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const cropdiv::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const cropdiv::SamplingError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const cropdiv::NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumeric;
  } catch (const cropdiv::ShapeError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
