#include "cropdiv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cropdiv::geometry {

BoundingBox::BoundingBox(double x1_, double y1_, double x2_, double y2_)
    : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
  if (!(x1 < x2) || !(y1 < y2)) {
    throw ShapeError("BoundingBox must have x1 < x2 and y1 < y2");
  }
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) ||
      !std::isfinite(y2)) {
    throw NumericError("BoundingBox coordinates must be finite");
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

void JitterConfig::validate() const {
  if (!(max_shift_frac > 0.0) || !(max_shift_frac <= 1.0)) {
    throw ConfigError("JitterConfig: max_shift_frac must be in (0, 1]");
  }
  if (!(min_iou > 0.0) || !(min_iou <= 1.0)) {
    throw ConfigError("JitterConfig: min_iou must be in (0, 1]");
  }
  if (max_attempts <= 0) {
    throw ConfigError("JitterConfig: max_attempts must be positive");
  }
}

JitteredBox jitter_box(const BoundingBox& gt, const JitterConfig& cfg,
                       std::mt19937_64& rng) {
  cfg.validate();
  const double w = gt.width();
  const double h = gt.height();
  const double m = cfg.max_shift_frac;

  std::uniform_real_distribution<double> shift(cfg.enlarge_only ? 0.0 : -m, m);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    // Outward shifts grow the box; symmetric shifts move both corners.
    const double sx1 = shift(rng);
    const double sy1 = shift(rng);
    const double sx2 = shift(rng);
    const double sy2 = shift(rng);

    double x1, y1, x2, y2;
    if (cfg.enlarge_only) {
      x1 = gt.x1 - sx1 * w;
      y1 = gt.y1 - sy1 * h;
      x2 = gt.x2 + sx2 * w;
      y2 = gt.y2 + sy2 * h;
    } else {
      x1 = gt.x1 + sx1 * w;
      y1 = gt.y1 + sy1 * h;
      x2 = gt.x2 + sx2 * w;
      y2 = gt.y2 + sy2 * h;
    }
    if (!(x1 < x2) || !(y1 < y2)) continue;  // degenerate draw, rejected

    BoundingBox candidate(x1, y1, x2, y2);
    const double score = iou(gt, candidate);
    if (score >= cfg.min_iou) {
      return {candidate, score};
    }
  }
  throw SamplingError("jitter_box: no candidate reached min_iou " +
                      std::to_string(cfg.min_iou) + " within " +
                      std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<JitteredBox> sample_augmented_boxes(const BoundingBox& gt, int n,
                                                const JitterConfig& cfg,
                                                std::mt19937_64& rng) {
  if (n < 0) {
    throw ConfigError("sample_augmented_boxes: n must be nonnegative");
  }
  std::vector<JitteredBox> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(jitter_box(gt, cfg, rng));
  }
  return out;
}

}  // namespace cropdiv::geometry
