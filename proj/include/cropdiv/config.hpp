#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cropdiv/evalharness.hpp"
#include "cropdiv/normvae.hpp"
#include "cropdiv/synthworld.hpp"

namespace cropdiv::config {

struct GenerationConfig {
  int count = 60;
  std::uint64_t seed = 1234;
  std::optional<std::uint32_t> class_id;  // default: all novel classes
  std::optional<std::vector<double>> beta_schedule;
};

struct Paths {
  std::string dataset = "out/world.cdds";
  std::string vanilla_checkpoint = "out/vanilla.nvae";
  std::string norm_checkpoint = "out/norm.nvae";
  std::string report_json = "out/report.json";
  std::string report_csv = "out/report.csv";
  std::string loss_curve_vanilla = "out/loss_vanilla.csv";
  std::string loss_curve_norm = "out/loss_norm.csv";
  std::string generated = "out/generated.cdgn";
};

/// One JSON document for the whole pipeline; unknown keys are rejected.
struct RunConfig {
  synthworld::WorldConfig world;
  normvae::VaeConfig vae;  // mode is set per command
  std::uint64_t train_seed = 0;
  GenerationConfig generation;
  evalharness::EvalConfig eval;
  std::vector<std::uint64_t> eval_seeds{0, 1, 2, 3, 4};
  Paths paths;

  /// --seed: replaces every seed knob; the i-th eval seed becomes seed + i.
  void override_seeds(std::uint64_t seed);
};

RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

/// The defaults above, serialized; `cropdiv` ships this via `--emit-config`.
std::string default_config_text();

}  // namespace cropdiv::config
