#include "cropdiv/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "cropdiv/io.hpp"
#include "cropdiv/nnkit.hpp"
#include "cropdiv/rng.hpp"

namespace cropdiv::evalharness {

using json = nlohmann::json;

std::string to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::None:
      return "none";
    case SourceTag::VanillaVae:
      return "vanilla_vae";
    case SourceTag::NormVae:
      return "norm_vae";
    case SourceTag::LowIouSubset:
      return "low_iou_subset";
    case SourceTag::HighIouSubset:
      return "high_iou_subset";
  }
  return "unknown";
}

SourceTag source_tag_from_string(const std::string& name) {
  if (name == "none") return SourceTag::None;
  if (name == "vanilla_vae") return SourceTag::VanillaVae;
  if (name == "norm_vae") return SourceTag::NormVae;
  if (name == "low_iou_subset") return SourceTag::LowIouSubset;
  if (name == "high_iou_subset") return SourceTag::HighIouSubset;
  throw ConfigError("unknown augmentation source '" + name + "'");
}

Vector ClassifierParams::probabilities(const Vector& feature) const {
  Vector logits = weights * feature + biases;
  const double peak = logits.maxCoeff();
  Vector exps = (logits.array() - peak).exp();
  return exps / exps.sum();
}

std::vector<double> EvalConfig::grid() const {
  validate();
  std::vector<double> g;
  for (double v = grid_start; v >= grid_stop - 1e-9; v -= grid_step) {
    g.push_back(std::max(v, grid_stop));
  }
  return g;
}

void EvalConfig::validate() const {
  if (!(grid_start > grid_stop) || !(grid_step > 0.0)) {
    throw ConfigError("EvalConfig: grid must be strictly decreasing");
  }
  if (grid_stop < 0.5 || grid_start > 1.0) {
    throw ConfigError("EvalConfig: grid must lie within [0.5, 1.0]");
  }
  if (samples_per_bin <= 0) {
    throw ConfigError("EvalConfig: samples_per_bin must be positive");
  }
  if (!(classifier.lr > 0.0) || classifier.epochs <= 0) {
    throw ConfigError("EvalConfig: bad classifier hyperparameters");
  }
}

double RobustnessReport::accuracy_at(double iou) const {
  for (std::size_t i = 0; i < iou_grid.size(); ++i) {
    if (std::abs(iou_grid[i] - iou) < 1e-9) return accuracy[i];
  }
  throw ConfigError("RobustnessReport: IoU " + std::to_string(iou) +
                    " not on the grid");
}

double RobustnessReport::bin_accuracy(double lo, double hi) const {
  double weighted = 0.0;
  long total = 0;
  for (std::size_t i = 0; i < iou_grid.size(); ++i) {
    if (iou_grid[i] >= lo - 1e-9 && iou_grid[i] <= hi + 1e-9) {
      weighted += accuracy[i] * sample_count[i];
      total += sample_count[i];
    }
  }
  if (total == 0) {
    throw ConfigError("RobustnessReport: no grid bins in [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  }
  return weighted / static_cast<double>(total);
}

ClassifierParams train_classifier(const synthworld::DatasetSplit& split,
                                  const AugmentationSource& aug,
                                  const ClassifierHyper& hyper, std::uint64_t seed) {
  (void)seed;  // training is full-batch from a fixed init, deterministic as-is
  if (split.novel_classes.empty()) {
    throw ConfigError("train_classifier: no novel classes");
  }
  const int dim_d = static_cast<int>(split.novel_classes.front().prototype.size());
  const int n_classes = static_cast<int>(split.novel_classes.size());

  std::unordered_map<std::uint32_t, int> class_index;
  std::vector<std::uint32_t> class_ids;
  for (int c = 0; c < n_classes; ++c) {
    class_index[split.novel_classes[c].class_id] = c;
    class_ids.push_back(split.novel_classes[c].class_id);
  }

  std::vector<const Vector*> features;
  std::vector<int> labels;
  std::vector<int> real_per_class(n_classes, 0);
  for (const auto& s : split.novel_samples) {
    const auto it = class_index.find(s.class_id);
    if (it == class_index.end()) {
      throw DataError("train_classifier: novel sample with unknown class id " +
                      std::to_string(s.class_id));
    }
    features.push_back(&s.feature);
    labels.push_back(it->second);
    real_per_class[it->second] += 1;
  }
  for (int c = 0; c < n_classes; ++c) {
    if (real_per_class[c] == 0) {
      throw ConfigError("train_classifier: class " +
                        std::to_string(class_ids[c]) + " has no real samples");
    }
  }
  for (const auto& f : aug.features) {
    const auto it = class_index.find(f.class_id);
    if (it == class_index.end()) {
      throw DataError("train_classifier: generated feature with unknown class id " +
                      std::to_string(f.class_id));
    }
    features.push_back(&f.feature);
    labels.push_back(it->second);
  }

  const auto n = static_cast<Eigen::Index>(features.size());
  Matrix x(n, dim_d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = features[static_cast<std::size_t>(i)]->transpose();
  }

  nnkit::MlpSpec spec;
  spec.layer_dims = {dim_d, n_classes};
  nnkit::ParamStore params = nnkit::ParamStore::zeros(spec);
  nnkit::AdamConfig adam;
  adam.lr = hyper.lr;
  auto state = nnkit::AdamState::init(params, adam);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    auto [logits, trace] = nnkit::mlp_forward(params, spec, x);
    Matrix dlogits(n, n_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector row = logits.row(i).transpose();
      const double peak = row.maxCoeff();
      Vector p = (row.array() - peak).exp();
      p /= p.sum();
      p(labels[static_cast<std::size_t>(i)]) -= 1.0;
      dlogits.row(i) = p.transpose() / static_cast<double>(n);
    }
    auto [grads, dx] = nnkit::mlp_backward(params, spec, trace, dlogits);
    (void)dx;
    nnkit::adam_step(params, grads, state);
  }

  ClassifierParams out;
  out.weights = params.layers[0].weight.transpose();
  out.biases = params.layers[0].bias;
  out.class_ids = std::move(class_ids);
  return out;
}

RobustnessReport eval_robustness(const ClassifierParams& params,
                                 const synthworld::WorldConfig& world,
                                 const synthworld::DatasetSplit& split,
                                 const std::vector<double>& grid, int n_per_bin,
                                 std::uint64_t seed) {
  if (grid.empty()) {
    throw ConfigError("eval_robustness: empty grid");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] < grid[i - 1])) {
      throw ConfigError("eval_robustness: grid must be strictly decreasing");
    }
  }
  std::unordered_map<std::uint32_t, int> class_index;
  for (std::size_t c = 0; c < params.class_ids.size(); ++c) {
    class_index[params.class_ids[c]] = static_cast<int>(c);
  }

  std::mt19937_64 gen(rng::derive_seed(seed, 40));
  RobustnessReport report;
  report.seed = seed;
  report.iou_grid = grid;

  const int n_classes = static_cast<int>(split.novel_classes.size());
  for (double iou : grid) {
    int correct = 0;
    double prob_sum = 0.0;
    for (int i = 0; i < n_per_bin; ++i) {
      const auto& cls =
          split.novel_classes[static_cast<std::size_t>(i % n_classes)];
      const auto sample = synthworld::sample_crop_feature(
          cls, iou, world.corruption_gain, gen);
      const Vector probs = params.probabilities(sample.feature);
      Eigen::Index top = 0;
      probs.maxCoeff(&top);
      const int truth = class_index.at(cls.class_id);
      if (static_cast<int>(top) == truth) correct += 1;
      prob_sum += probs(truth);
    }
    report.accuracy.push_back(static_cast<double>(correct) / n_per_bin);
    report.mean_true_prob.push_back(prob_sum / n_per_bin);
    report.sample_count.push_back(n_per_bin);
  }
  return report;
}

AugmentationSource build_source(SourceTag tag, const normvae::VaeParams& checkpoint,
                                const synthworld::DatasetSplit& split,
                                int per_class, std::uint64_t seed) {
  AugmentationSource source;
  source.tag = tag;
  if (tag == SourceTag::None) return source;

  const normvae::GMap& gmap = checkpoint.config.gmap;
  std::vector<double> schedule;
  int count = per_class;
  switch (tag) {
    case SourceTag::NormVae:
      schedule = normvae::default_beta_schedule(gmap, per_class);
      break;
    case SourceTag::VanillaVae:
      // Standard conditional-VAE sampling regime: latents at their natural
      // norm scale, no difficulty sweep.
      schedule.assign(static_cast<std::size_t>(per_class),
                      std::sqrt(static_cast<double>(gmap.latent_dim)));
      break;
    case SourceTag::LowIouSubset:
    case SourceTag::HighIouSubset: {
      std::vector<double> full = normvae::default_beta_schedule(gmap, per_class);
      std::sort(full.begin(), full.end());
      const int keep = static_cast<int>(
          std::ceil(0.3 * static_cast<double>(per_class)));
      if (tag == SourceTag::HighIouSubset) {
        // smallest norms = easy cases
        schedule.assign(full.begin(), full.begin() + keep);
      } else {
        schedule.assign(full.end() - keep, full.end());
      }
      count = keep;
      break;
    }
    case SourceTag::None:
      break;
  }

  for (const auto& cls : split.novel_classes) {
    normvae::GenerationRequest req;
    req.semantic = cls.semantic;
    req.count = count;
    req.beta_schedule = schedule;
    req.seed = rng::derive_seed(seed, cls.class_id);
    for (auto& gf : normvae::generate(checkpoint, req)) {
      source.features.push_back({cls.class_id, std::move(gf.feature), gf.beta});
    }
  }
  return source;
}

namespace {

SourceSummary summarize(SourceTag tag,
                        const std::vector<const RobustnessReport*>& reports) {
  SourceSummary s;
  s.source = tag;
  for (const auto* r : reports) {
    const double acc_drop = r->accuracy_at(1.0) - r->accuracy_at(0.5);
    double prob_drop = 0.0;
    for (std::size_t i = 0; i < r->iou_grid.size(); ++i) {
      if (std::abs(r->iou_grid[i] - 1.0) < 1e-9) prob_drop += r->mean_true_prob[i];
      if (std::abs(r->iou_grid[i] - 0.5) < 1e-9) prob_drop -= r->mean_true_prob[i];
    }
    s.per_seed_accuracy_drop.push_back(acc_drop);
    s.per_seed_hard_bin.push_back(r->bin_accuracy(0.5, 0.75 - 1e-6));
    s.per_seed_easy_bin.push_back(r->bin_accuracy(0.75, 1.0));
    s.mean_accuracy_drop += acc_drop;
    s.mean_prob_drop += prob_drop;
    s.mean_hard_bin_accuracy += s.per_seed_hard_bin.back();
    s.mean_easy_bin_accuracy += s.per_seed_easy_bin.back();
  }
  const double n = static_cast<double>(reports.size());
  if (n > 0) {
    s.mean_accuracy_drop /= n;
    s.mean_prob_drop /= n;
    s.mean_hard_bin_accuracy /= n;
    s.mean_easy_bin_accuracy /= n;
  }
  return s;
}

}  // namespace

ExperimentSummary run_comparison(const synthworld::WorldConfig& world,
                                 const synthworld::DatasetSplit& split,
                                 const std::vector<AugmentationSource>& sources,
                                 const std::vector<std::uint64_t>& seeds,
                                 const EvalConfig& cfg, int max_threads) {
  cfg.validate();
  if (sources.empty() || seeds.empty()) {
    throw ConfigError("run_comparison: need at least one source and one seed");
  }
  const auto grid = cfg.grid();

  struct Cell {
    const AugmentationSource* source;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& source : sources) {
    for (std::uint64_t seed : seeds) {
      cells.push_back({&source, seed});
    }
  }

  std::vector<RobustnessReport> reports(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size();
         i = next.fetch_add(1)) {
      const Cell& cell = cells[i];
      const auto classifier =
          train_classifier(split, *cell.source, cfg.classifier, cell.seed);
      reports[i] = eval_robustness(classifier, world, split, grid,
                                   cfg.samples_per_bin, cell.seed);
      reports[i].source = cell.source->tag;
    }
  };

  const int threads = std::max(1, std::min<int>(max_threads,
                                                static_cast<int>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentSummary summary;
  summary.reports = std::move(reports);
  for (const auto& source : sources) {
    std::vector<const RobustnessReport*> per_source;
    for (const auto& r : summary.reports) {
      if (r.source == source.tag) per_source.push_back(&r);
    }
    summary.summaries.push_back(summarize(source.tag, per_source));
  }
  return summary;
}

ExperimentSummary subset_experiment(const synthworld::WorldConfig& world,
                                    const synthworld::DatasetSplit& split,
                                    const normvae::VaeParams& checkpoint,
                                    int per_class, std::uint64_t generation_seed,
                                    const std::vector<std::uint64_t>& seeds,
                                    const EvalConfig& cfg, int max_threads) {
  std::vector<AugmentationSource> sources;
  sources.push_back(build_source(SourceTag::LowIouSubset, checkpoint, split,
                                 per_class, generation_seed));
  sources.push_back(build_source(SourceTag::HighIouSubset, checkpoint, split,
                                 per_class, generation_seed));
  return run_comparison(world, split, sources, seeds, cfg, max_threads);
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json summary_to_json(const ExperimentSummary& summary) {
  json root;
  root["reports"] = json::array();
  for (const auto& r : summary.reports) {
    json jr;
    jr["source"] = to_string(r.source);
    jr["seed"] = r.seed;
    jr["bins"] = json::array();
    for (std::size_t i = 0; i < r.iou_grid.size(); ++i) {
      jr["bins"].push_back({{"iou", r.iou_grid[i]},
                            {"accuracy", r.accuracy[i]},
                            {"mean_prob", r.mean_true_prob[i]},
                            {"count", r.sample_count[i]}});
    }
    root["reports"].push_back(std::move(jr));
  }
  root["summaries"] = json::array();
  for (const auto& s : summary.summaries) {
    root["summaries"].push_back({{"source", to_string(s.source)},
                                 {"mean_accuracy_drop", s.mean_accuracy_drop},
                                 {"mean_prob_drop", s.mean_prob_drop},
                                 {"mean_hard_bin_accuracy", s.mean_hard_bin_accuracy},
                                 {"mean_easy_bin_accuracy", s.mean_easy_bin_accuracy},
                                 {"per_seed_accuracy_drop", s.per_seed_accuracy_drop},
                                 {"per_seed_hard_bin", s.per_seed_hard_bin},
                                 {"per_seed_easy_bin", s.per_seed_easy_bin}});
  }
  return root;
}

}  // namespace

void export_report(const ExperimentSummary& summary,
                   const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Json) {
    io::write_file_atomic(path, summary_to_json(summary).dump(2) + "\n");
    return;
  }

  std::string csv = "source,seed,iou_bin,accuracy,mean_prob\n";
  for (const auto& r : summary.reports) {
    for (std::size_t i = 0; i < r.iou_grid.size(); ++i) {
      csv += to_string(r.source) + "," + std::to_string(r.seed) + "," +
             fmt17(r.iou_grid[i]) + "," + fmt17(r.accuracy[i]) + "," +
             fmt17(r.mean_true_prob[i]) + "\n";
    }
  }
  for (const auto& s : summary.summaries) {
    csv += to_string(s.source) + ",aggregate,accuracy_drop," +
           fmt17(s.mean_accuracy_drop) + "," + fmt17(s.mean_prob_drop) + "\n";
    csv += to_string(s.source) + ",aggregate,hard_bin," +
           fmt17(s.mean_hard_bin_accuracy) + ",\n";
    csv += to_string(s.source) + ",aggregate,easy_bin," +
           fmt17(s.mean_easy_bin_accuracy) + ",\n";
  }
  io::write_file_atomic(path, csv);
}

ExperimentSummary load_report_json(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  json root;
  try {
    root = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw DataError("report parse error in " + path.string() + ": " + e.what());
  }

  ExperimentSummary summary;
  for (const auto& jr : root.at("reports")) {
    RobustnessReport r;
    r.source = source_tag_from_string(jr.at("source").get<std::string>());
    r.seed = jr.at("seed").get<std::uint64_t>();
    for (const auto& bin : jr.at("bins")) {
      r.iou_grid.push_back(bin.at("iou").get<double>());
      r.accuracy.push_back(bin.at("accuracy").get<double>());
      r.mean_true_prob.push_back(bin.at("mean_prob").get<double>());
      r.sample_count.push_back(bin.at("count").get<int>());
    }
    summary.reports.push_back(std::move(r));
  }
  for (const auto& js : root.at("summaries")) {
    SourceSummary s;
    s.source = source_tag_from_string(js.at("source").get<std::string>());
    s.mean_accuracy_drop = js.at("mean_accuracy_drop").get<double>();
    s.mean_prob_drop = js.at("mean_prob_drop").get<double>();
    s.mean_hard_bin_accuracy = js.at("mean_hard_bin_accuracy").get<double>();
    s.mean_easy_bin_accuracy = js.at("mean_easy_bin_accuracy").get<double>();
    s.per_seed_accuracy_drop =
        js.at("per_seed_accuracy_drop").get<std::vector<double>>();
    s.per_seed_hard_bin = js.at("per_seed_hard_bin").get<std::vector<double>>();
    s.per_seed_easy_bin = js.at("per_seed_easy_bin").get<std::vector<double>>();
    summary.summaries.push_back(std::move(s));
  }
  return summary;
}

}  // namespace cropdiv::evalharness
