#include <doctest.h>

#include <cmath>

#include "ipg/errors.hpp"
#include "ipg/evaluate.hpp"
#include "ipg/rng.hpp"

using namespace ipg;

namespace {

Box square(double x, double y, double side) { return {x, y, x + side, y + side}; }

}  // namespace

TEST_CASE("size buckets") {
  CHECK(size_bucket(square(0, 0, 12)) == SizeBucket::Small);
  CHECK(size_bucket(square(0, 0, 12.01)) == SizeBucket::Medium);
  CHECK(size_bucket(square(0, 0, 32)) == SizeBucket::Medium);
  CHECK(size_bucket({0, 0, 64, 17}) == SizeBucket::Large);
  CHECK(in_bucket(square(0, 0, 5), SizeBucket::All));
}

TEST_CASE("detections equal to the ground truth score 1 everywhere") {
  std::vector<std::vector<GroundTruth>> gt = {
      {{square(2, 2, 8), 0}, {square(30, 30, 20), 1}, {square(60, 60, 40), 2}},
      {{square(5, 70, 10), 1}, {square(50, 5, 36), 0}}};
  std::vector<std::vector<DetectionBox>> dets(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (const auto& g : gt[i]) dets[i].push_back({g.box, g.class_idx, 0.9});
  }
  ApReport r = evaluate_ap(dets, gt, 3);
  CHECK(r.ap == 1.0);
  CHECK(r.ap_small == 1.0);
  CHECK(r.ap_medium == 1.0);
  CHECK(r.ap_large == 1.0);
}

TEST_CASE("no detections give zero") {
  std::vector<std::vector<GroundTruth>> gt = {{{square(2, 2, 8), 0}}};
  ApReport r = evaluate_ap({{}}, gt, 3);
  CHECK(r.ap == 0.0);
  CHECK(r.ap_small == 0.0);
}

TEST_CASE("five-box scene matches the hand PR curve") {
  std::vector<std::vector<GroundTruth>> gt = {
      {{square(0, 0, 20), 0}, {square(40, 0, 20), 0}, {square(80, 0, 20), 0}}};
  std::vector<std::vector<DetectionBox>> dets = {{
      {square(0, 0, 20), 0, 0.9},    // TP
      {square(0, 60, 20), 0, 0.8},   // FP
      {square(41, 0, 20), 0, 0.7},   // TP
      {square(1, 1, 20), 0, 0.6},    // FP, duplicate
      {square(80, 1, 20), 0, 0.5},   // TP
  }};
  // Precision 1, 1/2, 2/3, 1/2, 3/5 at recall 1/3, 1/3, 2/3, 2/3, 1.
  const double expected = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
  ApReport r = evaluate_ap(dets, gt, 1);
  CHECK(std::abs(r.ap - expected) < 1e-12);
  CHECK(std::abs(r.ap_medium - expected) < 1e-12);
  CHECK(r.ap_small == 0.0);
  CHECK(average_precision({true, false, true, false, true}, 3) == doctest::Approx(expected));
}

TEST_CASE("raising the score threshold never raises AP") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<GroundTruth>> gt(3);
    std::vector<std::vector<DetectionBox>> dets(3);
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 4; ++k) {
        Box b = square(uniform(rng, 0, 100), uniform(rng, 0, 100), uniform(rng, 4, 24));
        gt[i].push_back({b, k % 2});
        if (uniform(rng, 0, 1) < 0.7) {
          Box d = b;
          d.x_min += uniform(rng, -2, 2);
          dets[i].push_back({d, k % 2, uniform(rng, 0, 1)});
        }
        dets[i].push_back({square(uniform(rng, 0, 100), uniform(rng, 0, 100), 10), k % 2,
                           uniform(rng, 0, 1)});
      }
    }
    double previous = 2.0;
    for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95}) {
      std::vector<std::vector<DetectionBox>> kept(3);
      for (int i = 0; i < 3; ++i) {
        for (const auto& d : dets[i]) {
          if (d.score >= t) kept[i].push_back(d);
        }
      }
      double ap = evaluate_ap(kept, gt, 2).ap;
      CAPTURE(seed);
      CAPTURE(t);
      CHECK(ap <= previous + 1e-12);
      previous = ap;
    }
  }
}

TEST_CASE("a class with detections but no ground truth scores zero") {
  std::vector<std::vector<GroundTruth>> gt = {{{square(0, 0, 20), 0}}};
  std::vector<std::vector<DetectionBox>> dets = {{{square(0, 0, 20), 0, 0.9},
                                                  {square(50, 50, 20), 1, 0.8}}};
  ApReport r = evaluate_ap(dets, gt, 3);
  CHECK(r.per_class[0] == 1.0);
  CHECK(r.per_class[1] == 0.0);
  CHECK(std::isnan(r.per_class[2]));
  CHECK(r.ap == 0.5);
}

TEST_CASE("image count mismatch") {
  CHECK_THROWS_AS(evaluate_ap({{}, {}}, {{}}, 3), PreconditionError);
}
