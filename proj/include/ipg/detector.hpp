#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "ipg/layers.hpp"

namespace ipg {

// Axis-aligned box in input-image pixels.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const;
  bool valid() const { return x_min < x_max && y_min < y_max; }
};

double iou(const Box& a, const Box& b);

struct GroundTruth {
  Box box;
  int class_idx = 0;
};

struct DetectionBox {
  Box box;
  int class_idx = 0;
  double score = 0.0;
};

// One square anchor per feature position: centre (i + 0.5) * stride,
// side 4 * stride.
struct Anchor {
  double cx = 0, cy = 0, w = 0, h = 0;
  int level = 0;

  Box box() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
};

struct LevelGeometry {
  int height = 0;
  int width = 0;
  int stride = 0;
};

// Level-major, then row-major within a level.
std::vector<Anchor> make_anchors(const std::vector<LevelGeometry>& levels);

// (dx, dy, log dw, log dh) relative to the anchor.
using BoxDeltas = std::array<double, 4>;
BoxDeltas encode_box(const Box& box, const Anchor& anchor);
Box decode_box(const BoxDeltas& deltas, const Anchor& anchor);

// Shared-weight head: each branch is conv3x3 -> ReLU -> conv3x3.
class DetectionHead {
 public:
  DetectionHead(ParamStore& store, const std::string& name, int channels, int n_classes);

  struct Output {
    std::vector<Tensor> cls;  // (B, n_classes, H_i, W_i)
    std::vector<Tensor> box;  // (B, 4, H_i, W_i)
  };
  Output forward(const std::vector<Tensor>& features) const;

  int n_classes() const { return n_classes_; }

 private:
  int channels_;
  int n_classes_;
  Conv cls1_, cls2_, box1_, box2_;
};

DetectionHead::Output head_forward(const DetectionHead& head, const std::vector<Tensor>& features);

std::vector<LevelGeometry> level_geometry(const DetectionHead::Output& out,
                                          const std::vector<int>& strides);

constexpr int kNegative = -1;
constexpr int kIgnore = -2;

struct AnchorTargets {
  std::vector<int> labels;          // class index, kNegative or kIgnore
  std::vector<int> matched_gt;      // -1 when not positive
  std::vector<BoxDeltas> deltas;    // regression targets for positives
  int num_positive() const;
};

struct AssignParams {
  double positive_iou = 0.5;
  double negative_iou = 0.4;
};

// Positive at max IoU >= 0.5 (argmax GT), negative below 0.4, ignored in
// between; each GT also claims its best anchor when that IoU is above 0.
AnchorTargets assign_targets(const std::vector<Anchor>& anchors,
                             const std::vector<GroundTruth>& ground_truth,
                             AssignParams params = {});

struct LossParams {
  double alpha = 0.25;
  double gamma = 2.0;
  double smooth_l1_beta = 1.0 / 9.0;
};

struct DetectionLoss {
  Tensor total;  // scalar, on the tape
  double cls = 0.0;
  double box = 0.0;
};

// Focal BCE over non-ignored anchors plus smooth-L1 on positives, both
// normalized by the batch's positive count (at least 1). `targets` holds one
// entry per batch item.
DetectionLoss detection_loss(const DetectionHead::Output& out,
                             const std::vector<AnchorTargets>& targets, LossParams params = {});

struct DecodeParams {
  double score_thresh = 0.05;
  double iou_thresh = 0.5;
  int max_boxes = 100;
};

// Greedy NMS over boxes of one class; returns surviving indices by
// descending score.
std::vector<std::size_t> greedy_nms(const std::vector<DetectionBox>& boxes, double iou_thresh);

// Per-image decoding: sigmoid scores, score threshold, class-wise NMS,
// clipping to the image, top max_boxes by score.
std::vector<DetectionBox> decode_and_nms(const DetectionHead::Output& out, int batch_index,
                                         const std::vector<Anchor>& anchors, DecodeParams params,
                                         int image_height, int image_width);

// Text dump: "image_id class score x_min y_min x_max y_max", 6 decimals.
struct DumpedDetection {
  int image_id = 0;
  DetectionBox det;
};
void write_detections(std::ostream& os, int image_id, const std::vector<DetectionBox>& dets);
std::vector<DumpedDetection> read_detections(std::istream& is);

}  // namespace ipg
