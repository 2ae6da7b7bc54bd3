#pragma once

#include <random>
#include <vector>

#include "cropdiv/types.hpp"

namespace cropdiv::geometry {

/// Axis-aligned box with strictly positive area (x1 < x2, y1 < y2).
struct BoundingBox {
  double x1, y1, x2, y2;

  BoundingBox(double x1_, double y1_, double x2_, double y2_);

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

/// Intersection-over-union in [0, 1]; 0 for disjoint boxes, 1 iff identical.
double iou(const BoundingBox& a, const BoundingBox& b);

struct JitterConfig {
  double max_shift_frac = 0.3;  // per-corner shift as fraction of box dims
  double min_iou = 0.5;
  int max_attempts = 100;
  bool enlarge_only = false;  // corners move outward only

  void validate() const;
};

struct JitteredBox {
  BoundingBox box;
  double iou_score;
};

/// Rejection-samples a box around gt by displacing each corner uniformly,
/// until iou(gt, box) >= cfg.min_iou. Throws SamplingError after
/// cfg.max_attempts rejections.
JitteredBox jitter_box(const BoundingBox& gt, const JitterConfig& cfg,
                       std::mt19937_64& rng);

/// n accepted jittered boxes in draw order; deterministic given the rng state.
std::vector<JitteredBox> sample_augmented_boxes(const BoundingBox& gt, int n,
                                                const JitterConfig& cfg,
                                                std::mt19937_64& rng);

}  // namespace cropdiv::geometry
