#pragma once

#include <vector>

#include "ipg/detector.hpp"

namespace ipg {

enum class SizeBucket { All, Small, Medium, Large };

// Bucket by sqrt(area): small <= 12 px, medium <= 32 px, large otherwise.
SizeBucket size_bucket(const Box& box);
bool in_bucket(const Box& box, SizeBucket bucket);

struct ApReport {
  double ap = 0.0;
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
  std::vector<double> per_class;  // all-sizes AP; NaN where a class has neither GT nor detections
};

// All-point interpolated area under a precision/recall curve. `tp` flags are
// in descending-score order; `num_gt` is the number of positives.
double average_precision(const std::vector<bool>& tp, int num_gt);

// Mean over classes of per-class AP at `iou_thresh`. Detections matching a GT
// outside the bucket, and unmatched detections outside the bucket, are
// ignored. A class with detections but no GT scores 0.
ApReport evaluate_ap(const std::vector<std::vector<DetectionBox>>& detections,
                     const std::vector<std::vector<GroundTruth>>& ground_truth, int n_classes,
                     double iou_thresh = 0.5);

double evaluate_bucket(const std::vector<std::vector<DetectionBox>>& detections,
                       const std::vector<std::vector<GroundTruth>>& ground_truth, int n_classes,
                       double iou_thresh, SizeBucket bucket,
                       std::vector<double>* per_class = nullptr);

}  // namespace ipg
