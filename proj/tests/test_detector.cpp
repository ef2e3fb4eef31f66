#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ipg/detector.hpp"
#include "ipg/errors.hpp"
#include "ipg/gradsuite.hpp"
#include "ipg/rng.hpp"
#include "test_util.hpp"

using namespace ipg;

namespace {

DetectionHead::Output constant_output(const std::vector<LevelGeometry>& levels, int n_classes,
                                      double logit) {
  DetectionHead::Output out;
  for (const LevelGeometry& g : levels) {
    out.cls.emplace_back(Shape{1, n_classes, g.height, g.width}, logit);
    out.box.emplace_back(Shape{1, 4, g.height, g.width}, 0.0);
  }
  return out;
}

// Writes per-anchor logits / deltas into a single-image head output.
void set_anchor(DetectionHead::Output& out, std::size_t anchor, int cls, double logit,
                const BoxDeltas* deltas) {
  for (std::size_t l = 0; l < out.cls.size(); ++l) {
    const Shape& s = out.cls[l].shape();
    const std::size_t plane = s.plane();
    if (anchor >= plane) {
      anchor -= plane;
      continue;
    }
    out.cls[l].mutable_values()[cls * plane + anchor] = logit;
    if (deltas) {
      for (int k = 0; k < 4; ++k) out.box[l].mutable_values()[k * plane + anchor] = (*deltas)[k];
    }
    return;
  }
}

Box random_box(Rng& rng, double extent) {
  double x = uniform(rng, 0.0, extent), y = uniform(rng, 0.0, extent);
  double w = uniform(rng, 2.0, extent / 2), h = uniform(rng, 2.0, extent / 2);
  return {x, y, x + w, y + h};
}

double iou_oracle(const Box& a, const Box& b) {
  // Area of the intersection by explicit corner comparison.
  double left = a.x_min > b.x_min ? a.x_min : b.x_min;
  double right = a.x_max < b.x_max ? a.x_max : b.x_max;
  double top = a.y_min > b.y_min ? a.y_min : b.y_min;
  double bottom = a.y_max < b.y_max ? a.y_max : b.y_max;
  if (right <= left || bottom <= top) return 0.0;
  double inter = (right - left) * (bottom - top);
  return inter / ((a.x_max - a.x_min) * (a.y_max - a.y_min) +
                  (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter);
}

}  // namespace

TEST_CASE("zero deltas decode to the anchor") {
  Anchor a{20.5, 13.25, 32, 32, 0};
  Box b = decode_box({0, 0, 0, 0}, a);
  Box expect = a.box();
  CHECK(b.x_min == expect.x_min);
  CHECK(b.y_min == expect.y_min);
  CHECK(b.x_max == expect.x_max);
  CHECK(b.y_max == expect.y_max);
}

TEST_CASE("anchor layout") {
  auto anchors = make_anchors({{32, 32, 4}, {16, 16, 8}, {8, 8, 16}, {4, 4, 32}});
  CHECK(anchors.size() == 1360);
  CHECK(anchors[0].cx == 2.0);
  CHECK(anchors[0].w == 16.0);
  CHECK(anchors[1].cx == 6.0);
  CHECK(anchors[1024].level == 1);
  CHECK(anchors[1024].cx == 4.0);
  CHECK(anchors.back().w == 128.0);
}

TEST_CASE("encode and decode are inverse") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Box b = random_box(rng, 100);
    Anchor a{uniform(rng, 0, 100), uniform(rng, 0, 100), 16, 16, 0};
    Box r = decode_box(encode_box(b, a), a);
    CHECK(std::abs(r.x_min - b.x_min) < 1e-9);
    CHECK(std::abs(r.y_max - b.y_max) < 1e-9);
  }
}

TEST_CASE("assignment examples") {
  std::vector<Anchor> anchors = {{8, 8, 16, 16, 0}, {100, 100, 16, 16, 0}};
  auto t = assign_targets(anchors, {{{0, 0, 16, 16}, 2}, {{40, 40, 50, 50}, 1}});
  CHECK(t.labels[0] == 2);
  CHECK(t.matched_gt[0] == 0);
  // The second GT overlaps no anchor and claims nothing.
  CHECK(t.num_positive() == 1);
  CHECK(t.labels[1] == kNegative);

  auto near = assign_targets(anchors, {{{90, 90, 94, 94}, 1}});
  CHECK(near.labels[1] == 1);  // IoU 4 / 268, below every band, still claimed

  auto none = assign_targets(anchors, {});
  CHECK(none.num_positive() == 0);
  CHECK(none.labels[1] == kNegative);
}

TEST_CASE("assignment matches an exhaustive IoU table") {
  // 3 anchors, 2 GTs, IoUs chosen to hit every band.
  std::vector<Anchor> anchors = {{10, 10, 20, 20, 0}, {17, 10, 20, 20, 0}, {60, 60, 20, 20, 0}, {110, 110, 20, 20, 0}};
  std::vector<GroundTruth> gts = {{{0, 0, 20, 20}, 0}, {{52, 52, 70, 70}, 1}};
  auto t = assign_targets(anchors, gts);

  for (int seed = 0; seed < 200; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    std::vector<Anchor> as;
    for (int i = 0; i < 12; ++i) {
      double side = uniform(rng, 8, 40);
      as.push_back({uniform(rng, 0, 64), uniform(rng, 0, 64), side, side, 0});
    }
    std::vector<GroundTruth> gs;
    for (int g = 0; g < 3; ++g) gs.push_back({random_box(rng, 64), g});
    auto got = assign_targets(as, gs);

    std::vector<std::vector<double>> table(as.size(), std::vector<double>(gs.size()));
    for (std::size_t a = 0; a < as.size(); ++a) {
      for (std::size_t g = 0; g < gs.size(); ++g) table[a][g] = iou_oracle(as[a].box(), gs[g].box);
    }
    for (std::size_t a = 0; a < as.size(); ++a) {
      double best = *std::max_element(table[a].begin(), table[a].end());
      bool claimed = false;
      for (std::size_t g = 0; g < gs.size(); ++g) {
        std::size_t best_a = 0;
        for (std::size_t b = 1; b < as.size(); ++b) {
          if (table[b][g] > table[best_a][g]) best_a = b;
        }
        claimed = claimed || (best_a == a && table[a][g] > 0);
      }
      CAPTURE(seed);
      CAPTURE(a);
      if (best >= 0.5 || claimed) {
        CHECK(got.labels[a] >= 0);
      } else if (best >= 0.4) {
        CHECK(got.labels[a] == kIgnore);
      } else {
        CHECK(got.labels[a] == kNegative);
      }
    }
  }

  CHECK(t.labels[0] == 0);
  CHECK(t.labels[1] == kIgnore);  // IoU 260 / 540 with GT 0
  CHECK(t.labels[2] == 1);
  CHECK(t.labels[3] == kNegative);
  CHECK(t.matched_gt[2] == 1);
}

TEST_CASE("saturated correct predictions give near-zero loss") {
  std::vector<LevelGeometry> levels = {{4, 4, 8}, {2, 2, 16}};
  auto anchors = make_anchors(levels);
  std::vector<GroundTruth> gts = {{{2, 2, 30, 30}, 1}, {{1, 17, 17, 31}, 0}};
  auto targets = assign_targets(anchors, gts);
  REQUIRE(targets.num_positive() > 0);

  auto out = constant_output(levels, 3, -30.0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (targets.labels[a] >= 0) set_anchor(out, a, targets.labels[a], 30.0, &targets.deltas[a]);
    if (targets.labels[a] == kIgnore) set_anchor(out, a, 0, 0.0, nullptr);
  }
  auto loss = detection_loss(out, {targets});
  CHECK(loss.total.item() < 1e-3);
  CHECK(loss.box == 0.0);
}

TEST_CASE("an image without objects has zero box loss") {
  std::vector<LevelGeometry> levels = {{4, 4, 8}, {2, 2, 16}};
  auto anchors = make_anchors(levels);
  auto out = constant_output(levels, 3, 0.3);
  auto loss = detection_loss(out, {assign_targets(anchors, {})});
  CHECK(loss.box == 0.0);
  CHECK(std::isfinite(loss.cls));
  CHECK(loss.cls > 0.0);
}

TEST_CASE("loss ignores ground-truth order") {
  std::vector<LevelGeometry> levels = {{8, 8, 4}, {4, 4, 8}};
  auto anchors = make_anchors(levels);
  std::vector<GroundTruth> gts = {{{3, 3, 14, 14}, 0}, {{18, 2, 30, 12}, 2}, {{5, 20, 13, 29}, 1}};
  std::vector<GroundTruth> reversed(gts.rbegin(), gts.rend());
  DetectionHead::Output out;
  std::uint64_t seed = 0;
  for (const auto& g : levels) {
    out.cls.push_back(testing::random_tensor({1, 3, g.height, g.width}, ++seed));
    out.box.push_back(testing::random_tensor({1, 4, g.height, g.width}, ++seed));
  }
  auto a = detection_loss(out, {assign_targets(anchors, gts)});
  auto b = detection_loss(out, {assign_targets(anchors, reversed)});
  CHECK(std::abs(a.total.item() - b.total.item()) < 1e-12);
}

TEST_CASE("loss ignores anchor order") {
  std::vector<LevelGeometry> fine_first = {{8, 8, 4}, {4, 4, 8}};
  std::vector<LevelGeometry> coarse_first = {fine_first[1], fine_first[0]};
  std::vector<GroundTruth> gts = {{{3.3, 5.1, 17.7, 19.2}, 0}, {{20.4, 1.7, 29.9, 12.6}, 2}};
  DetectionHead::Output a;
  std::uint64_t seed = 40;
  for (const auto& g : fine_first) {
    a.cls.push_back(testing::random_tensor({1, 3, g.height, g.width}, ++seed));
    a.box.push_back(testing::random_tensor({1, 4, g.height, g.width}, ++seed));
  }
  DetectionHead::Output b{{a.cls[1], a.cls[0]}, {a.box[1], a.box[0]}};
  auto la = detection_loss(a, {assign_targets(make_anchors(fine_first), gts)});
  auto lb = detection_loss(b, {assign_targets(make_anchors(coarse_first), gts)});
  CHECK(std::abs(la.total.item() - lb.total.item()) < 1e-12);
}

TEST_CASE("loss argument checks") {
  std::vector<LevelGeometry> levels = {{2, 2, 8}};
  auto out = constant_output(levels, 3, 0.0);
  auto t = assign_targets(make_anchors(levels), {});
  CHECK_THROWS_AS(detection_loss(out, {t, t}), ShapeError);
  CHECK_THROWS_AS(detection_loss(out, {assign_targets(make_anchors({{3, 3, 8}}), {})}), ShapeError);
}

TEST_CASE("head rejects a channel mismatch") {
  ParamStore store(1);
  DetectionHead head(store, "head", 8, 3);
  auto out = head.forward({Tensor(Shape{1, 8, 4, 4}), Tensor(Shape{1, 8, 2, 2})});
  CHECK(out.cls[0].shape() == Shape{1, 3, 4, 4});
  CHECK(out.box[1].shape() == Shape{1, 4, 2, 2});
  CHECK_THROWS_AS(head.forward({Tensor(Shape{1, 6, 4, 4})}), ShapeError);
}

TEST_CASE("NMS keeps the higher score of an IoU 0.6 pair") {
  // Two 10x10 boxes offset by 2.5 px have IoU 75 / 125 = 0.6.
  std::vector<DetectionBox> boxes = {{{2.5, 0, 12.5, 10}, 0, 0.8}, {{0, 0, 10, 10}, 0, 0.9}};
  CHECK(std::abs(iou(boxes[0].box, boxes[1].box) - 0.6) < 1e-12);
  auto kept = greedy_nms(boxes, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == 1);
}

TEST_CASE("NMS matches an exhaustive reference") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<DetectionBox> boxes;
    for (int i = 0; i < 20; ++i) boxes.push_back({random_box(rng, 50), 0, uniform(rng, 0, 1)});

    // Reference: repeatedly take the best remaining box and drop all its overlaps.
    std::vector<bool> alive(boxes.size(), true);
    std::vector<std::size_t> expected;
    for (;;) {
      int best = -1;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (alive[i] && (best < 0 || boxes[i].score > boxes[best].score)) best = static_cast<int>(i);
      }
      if (best < 0) break;
      expected.push_back(best);
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (alive[i] && iou_oracle(boxes[i].box, boxes[best].box) > 0.5) alive[i] = false;
      }
      alive[best] = false;
    }
    auto got = greedy_nms(boxes, 0.5);
    CAPTURE(seed);
    CHECK(got == expected);

    // Shuffled input keeps the same boxes.
    std::vector<DetectionBox> shuffled(boxes.rbegin(), boxes.rend());
    auto again = greedy_nms(shuffled, 0.5);
    REQUIRE(again.size() == got.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(shuffled[again[k]].score == boxes[got[k]].score);
    }
  }
}

TEST_CASE("decode applies thresholds and caps") {
  std::vector<LevelGeometry> levels = {{4, 4, 8}};
  auto anchors = make_anchors(levels);
  auto out = constant_output(levels, 2, -10.0);
  set_anchor(out, 0, 1, 3.0, nullptr);
  set_anchor(out, 15, 0, 2.0, nullptr);
  auto dets = decode_and_nms(out, 0, anchors, {}, 32, 32);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].class_idx == 1);
  CHECK(dets[0].box.x_min == 0.0);  // clipped
  CHECK(dets[1].box.x_max == 32.0);

  DecodeParams one;
  one.max_boxes = 1;
  CHECK(decode_and_nms(out, 0, anchors, one, 32, 32).size() == 1);
  DecodeParams bad;
  bad.iou_thresh = 1.5;
  CHECK_THROWS_AS(decode_and_nms(out, 0, anchors, bad, 32, 32), PreconditionError);
}

TEST_CASE("detection dump round trip") {
  std::vector<DetectionBox> dets = {{{1.25, 2.5, 10.125, 20.0}, 2, 0.875}, {{0, 0, 5, 5}, 0, 0.5}};
  std::stringstream ss;
  write_detections(ss, 7, dets);
  CHECK(ss.str().rfind("7 2 0.875000 1.250000 2.500000 10.125000 20.000000\n", 0) == 0);
  auto back = read_detections(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_id == 7);
  CHECK(back[0].det.box.x_max == 10.125);
  CHECK(back[1].det.score == 0.5);

  std::stringstream bad("1 2 x");
  CHECK_THROWS_AS(read_detections(bad), PreconditionError);
}

TEST_CASE("detection loss gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    CHECK(run_gradient_case("module.detection_loss", seed).max_rel_error < 1e-4);
  }
}
