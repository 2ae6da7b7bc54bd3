#include <doctest.h>

#include <cmath>
#include <random>

#include "cropdiv/geometry.hpp"
#include "cropdiv/types.hpp"

using namespace cropdiv;
using namespace cropdiv::geometry;

TEST_CASE("iou hand cases") {
  const BoundingBox b(0.2, 0.3, 1.7, 2.1);
  CHECK(iou(b, b) == 1.0);

  const BoundingBox left(0.0, 0.0, 1.0, 1.0);
  const BoundingBox right(2.0, 2.0, 3.0, 3.0);
  CHECK(iou(left, right) == 0.0);

  // intersection 1, union 4 + 4 - 1 = 7
  const BoundingBox a(0.0, 0.0, 2.0, 2.0);
  const BoundingBox c(1.0, 1.0, 3.0, 3.0);
  CHECK(iou(a, c) == 1.0 / 7.0);
}

TEST_CASE("iou symmetry and rigid invariances over random boxes") {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> pos(-5.0, 5.0);
  std::uniform_real_distribution<double> len(0.1, 4.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  std::uniform_real_distribution<double> scale(0.2, 5.0);

  for (int trial = 0; trial < 1000; ++trial) {
    const double ax = pos(gen), ay = pos(gen);
    const BoundingBox a(ax, ay, ax + len(gen), ay + len(gen));
    const double bx = pos(gen), by = pos(gen);
    const BoundingBox b(bx, by, bx + len(gen), by + len(gen));

    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(b, a) == v);

    const double dx = shift(gen), dy = shift(gen);
    const BoundingBox at(a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy);
    const BoundingBox bt(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy);
    CHECK(iou(at, bt) == doctest::Approx(v).epsilon(1e-12));

    const double c = scale(gen);
    const BoundingBox as(c * a.x1, c * a.y1, c * a.x2, c * a.y2);
    const BoundingBox bs(c * b.x1, c * b.y1, c * b.x2, c * b.y2);
    CHECK(iou(as, bs) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("degenerate boxes are rejected") {
  CHECK_THROWS_AS(BoundingBox(1.0, 0.0, 1.0, 2.0), ShapeError);
  CHECK_THROWS_AS(BoundingBox(0.0, 2.0, 1.0, 1.0), ShapeError);
}

TEST_CASE("vanishing jitter reproduces the ground truth box") {
  const BoundingBox gt(0.0, 0.0, 1.0, 1.0);
  JitterConfig cfg;
  cfg.max_shift_frac = 1e-12;
  std::mt19937_64 gen(5);
  const JitteredBox jb = jitter_box(gt, cfg, gen);
  CHECK(jb.iou_score > 1.0 - 1e-9);
  CHECK(std::abs(jb.box.x1 - gt.x1) <= 1e-11);
  CHECK(std::abs(jb.box.y2 - gt.y2) <= 1e-11);
}

TEST_CASE("jittered ious stay in range and cover the spectrum") {
  const BoundingBox gt(0.0, 0.0, 1.0, 1.0);
  JitterConfig cfg;
  cfg.max_shift_frac = 0.3;
  std::mt19937_64 gen(3);
  const auto boxes = sample_augmented_boxes(gt, 10000, cfg, gen);
  REQUIRE(boxes.size() == 10000);

  int hist[10] = {};
  for (const auto& jb : boxes) {
    CHECK(jb.iou_score >= 0.5);
    CHECK(jb.iou_score <= 1.0);
    int bin = static_cast<int>((jb.iou_score - 0.5) / 0.05);
    if (bin == 10) bin = 9;  // iou exactly 1
    ++hist[bin];
  }
  for (int b = 0; b < 10; ++b) {
    INFO("bin ", b);
    CHECK(hist[b] > 0);
  }
}

TEST_CASE("sampling is deterministic and n = 0 is empty") {
  const BoundingBox gt(0.5, 1.0, 2.5, 2.0);
  JitterConfig cfg;
  std::mt19937_64 g0(17);
  CHECK(sample_augmented_boxes(gt, 0, cfg, g0).empty());

  std::mt19937_64 g1(17);
  std::mt19937_64 g2(17);
  const auto a = sample_augmented_boxes(gt, 50, cfg, g1);
  const auto b = sample_augmented_boxes(gt, 50, cfg, g2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].iou_score == b[i].iou_score);
    CHECK(a[i].box.x1 == b[i].box.x1);
    CHECK(a[i].box.y2 == b[i].box.y2);
  }
}

TEST_CASE("impossible rejection budgets raise SamplingError") {
  const BoundingBox gt(0.0, 0.0, 1.0, 1.0);
  JitterConfig cfg;
  cfg.max_shift_frac = 0.9;
  cfg.min_iou = 0.999;  // essentially never hit with large shifts
  cfg.max_attempts = 3;
  std::mt19937_64 gen(9);
  CHECK_THROWS_AS(jitter_box(gt, cfg, gen), SamplingError);
}

TEST_CASE("enlarge_only never shrinks the box") {
  const BoundingBox gt(0.0, 0.0, 1.0, 1.0);
  JitterConfig cfg;
  cfg.max_shift_frac = 0.2;
  cfg.enlarge_only = true;
  std::mt19937_64 gen(13);
  for (const auto& jb : sample_augmented_boxes(gt, 200, cfg, gen)) {
    CHECK(jb.box.x1 <= gt.x1);
    CHECK(jb.box.y1 <= gt.y1);
    CHECK(jb.box.x2 >= gt.x2);
    CHECK(jb.box.y2 >= gt.y2);
  }
}
