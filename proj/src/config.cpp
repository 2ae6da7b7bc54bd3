#include "cropdiv/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "cropdiv/io.hpp"

namespace cropdiv::config {

using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::string& section,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + section +
                        "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for config key '") + key +
                        "': " + e.what());
    }
  }
}

void parse_world(const json& obj, synthworld::WorldConfig& world) {
  reject_unknown_keys(obj, "world",
                      {"feature_dim", "semantic_dim", "corruption_rank",
                       "base_classes", "novel_classes", "samples_per_base_class",
                       "shots", "corruption_gain", "noise_sigma", "seed",
                       "embedding_file"});
  read(obj, "feature_dim", world.feature_dim);
  read(obj, "semantic_dim", world.semantic_dim);
  read(obj, "corruption_rank", world.corruption_rank);
  read(obj, "base_classes", world.base_class_count);
  read(obj, "novel_classes", world.novel_class_count);
  read(obj, "samples_per_base_class", world.samples_per_base_class);
  read(obj, "shots", world.shots);
  read(obj, "corruption_gain", world.corruption_gain);
  read(obj, "noise_sigma", world.noise_sigma);
  read(obj, "seed", world.seed);
  if (obj.contains("embedding_file")) {
    world.embedding_file = obj.at("embedding_file").get<std::string>();
  }
}

void parse_vae(const json& obj, RunConfig& cfg) {
  reject_unknown_keys(
      obj, "vae",
      {"latent_dim", "encoder_hidden", "decoder_hidden", "kl_weight",
       "leaky_slope", "epochs", "batch_size", "learning_rate", "train_seed",
       "gmap_multiplier_at_iou_one", "gmap_multiplier_at_iou_half"});
  auto& vae = cfg.vae;
  read(obj, "latent_dim", vae.latent_dim);
  read(obj, "encoder_hidden", vae.encoder_hidden);
  read(obj, "decoder_hidden", vae.decoder_hidden);
  read(obj, "kl_weight", vae.kl_weight);
  read(obj, "leaky_slope", vae.leaky_slope);
  read(obj, "epochs", vae.epochs);
  read(obj, "batch_size", vae.batch_size);
  read(obj, "learning_rate", vae.optimizer.lr);
  read(obj, "train_seed", cfg.train_seed);

  double mult_one = 1.0;
  double mult_half = 5.0;
  read(obj, "gmap_multiplier_at_iou_one", mult_one);
  read(obj, "gmap_multiplier_at_iou_half", mult_half);
  const double root = std::sqrt(static_cast<double>(vae.latent_dim));
  if (mult_one == 1.0 && mult_half == 5.0) {
    vae.gmap = normvae::GMap::inverse_default(vae.latent_dim);
  } else {
    vae.gmap = normvae::GMap::from_endpoints(vae.latent_dim, mult_one * root,
                                             mult_half * root);
  }
}

void parse_generation(const json& obj, GenerationConfig& gen) {
  reject_unknown_keys(obj, "generation",
                      {"count", "seed", "class_id", "beta_schedule"});
  read(obj, "count", gen.count);
  read(obj, "seed", gen.seed);
  if (obj.contains("class_id")) {
    gen.class_id = obj.at("class_id").get<std::uint32_t>();
  }
  if (obj.contains("beta_schedule")) {
    gen.beta_schedule = obj.at("beta_schedule").get<std::vector<double>>();
  }
}

void parse_eval(const json& obj, RunConfig& cfg) {
  reject_unknown_keys(obj, "eval",
                      {"grid_start", "grid_stop", "grid_step", "samples_per_bin",
                       "seeds", "classifier_epochs", "classifier_lr"});
  read(obj, "grid_start", cfg.eval.grid_start);
  read(obj, "grid_stop", cfg.eval.grid_stop);
  read(obj, "grid_step", cfg.eval.grid_step);
  read(obj, "samples_per_bin", cfg.eval.samples_per_bin);
  read(obj, "seeds", cfg.eval_seeds);
  read(obj, "classifier_epochs", cfg.eval.classifier.epochs);
  read(obj, "classifier_lr", cfg.eval.classifier.lr);
}

void parse_paths(const json& obj, Paths& paths) {
  reject_unknown_keys(obj, "paths",
                      {"dataset", "vanilla_checkpoint", "norm_checkpoint",
                       "report_json", "report_csv", "loss_curve_vanilla",
                       "loss_curve_norm", "generated"});
  read(obj, "dataset", paths.dataset);
  read(obj, "vanilla_checkpoint", paths.vanilla_checkpoint);
  read(obj, "norm_checkpoint", paths.norm_checkpoint);
  read(obj, "report_json", paths.report_json);
  read(obj, "report_csv", paths.report_csv);
  read(obj, "loss_curve_vanilla", paths.loss_curve_vanilla);
  read(obj, "loss_curve_norm", paths.loss_curve_norm);
  read(obj, "generated", paths.generated);
}

}  // namespace

void RunConfig::override_seeds(std::uint64_t seed) {
  world.seed = seed;
  train_seed = seed;
  generation.seed = seed;
  for (std::size_t i = 0; i < eval_seeds.size(); ++i) {
    eval_seeds[i] = seed + i;
  }
}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) {
    throw ConfigError("config root must be a JSON object");
  }
  reject_unknown_keys(root, "(root)",
                      {"world", "vae", "generation", "eval", "paths"});

  RunConfig cfg;
  if (root.contains("world")) parse_world(root.at("world"), cfg.world);
  if (root.contains("vae")) parse_vae(root.at("vae"), cfg);
  if (root.contains("generation")) parse_generation(root.at("generation"), cfg.generation);
  if (root.contains("eval")) parse_eval(root.at("eval"), cfg);
  if (root.contains("paths")) parse_paths(root.at("paths"), cfg.paths);

  cfg.vae.feature_dim = cfg.world.feature_dim;
  cfg.vae.semantic_dim = cfg.world.semantic_dim;
  cfg.world.validate();
  cfg.vae.validate();
  cfg.eval.validate();
  if (cfg.eval_seeds.empty()) {
    throw ConfigError("eval.seeds must not be empty");
  }
  if (cfg.generation.count < 1) {
    throw ConfigError("generation.count must be >= 1");
  }
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

std::string default_config_text() {
  const RunConfig cfg;
  json root;
  root["world"] = {{"feature_dim", cfg.world.feature_dim},
                   {"semantic_dim", cfg.world.semantic_dim},
                   {"corruption_rank", cfg.world.corruption_rank},
                   {"base_classes", cfg.world.base_class_count},
                   {"novel_classes", cfg.world.novel_class_count},
                   {"samples_per_base_class", cfg.world.samples_per_base_class},
                   {"shots", cfg.world.shots},
                   {"corruption_gain", cfg.world.corruption_gain},
                   {"noise_sigma", cfg.world.noise_sigma},
                   {"seed", cfg.world.seed}};
  root["vae"] = {{"latent_dim", cfg.vae.latent_dim},
                 {"encoder_hidden", cfg.vae.encoder_hidden},
                 {"decoder_hidden", cfg.vae.decoder_hidden},
                 {"kl_weight", cfg.vae.kl_weight},
                 {"leaky_slope", cfg.vae.leaky_slope},
                 {"epochs", cfg.vae.epochs},
                 {"batch_size", cfg.vae.batch_size},
                 {"learning_rate", cfg.vae.optimizer.lr},
                 {"train_seed", cfg.train_seed},
                 {"gmap_multiplier_at_iou_one", 1.0},
                 {"gmap_multiplier_at_iou_half", 5.0}};
  root["generation"] = {{"count", cfg.generation.count},
                        {"seed", cfg.generation.seed}};
  root["eval"] = {{"grid_start", cfg.eval.grid_start},
                  {"grid_stop", cfg.eval.grid_stop},
                  {"grid_step", cfg.eval.grid_step},
                  {"samples_per_bin", cfg.eval.samples_per_bin},
                  {"seeds", cfg.eval_seeds},
                  {"classifier_epochs", cfg.eval.classifier.epochs},
                  {"classifier_lr", cfg.eval.classifier.lr}};
  root["paths"] = {{"dataset", cfg.paths.dataset},
                   {"vanilla_checkpoint", cfg.paths.vanilla_checkpoint},
                   {"norm_checkpoint", cfg.paths.norm_checkpoint},
                   {"report_json", cfg.paths.report_json},
                   {"report_csv", cfg.paths.report_csv},
                   {"loss_curve_vanilla", cfg.paths.loss_curve_vanilla},
                   {"loss_curve_norm", cfg.paths.loss_curve_norm},
                   {"generated", cfg.paths.generated}};
  return root.dump(2) + "\n";
}

}  // namespace cropdiv::config
