#include "ipg/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipg/errors.hpp"

namespace ipg {

SizeBucket size_bucket(const Box& box) {
  const double side = std::sqrt(box.area());
  if (side <= 12.0) return SizeBucket::Small;
  if (side <= 32.0) return SizeBucket::Medium;
  return SizeBucket::Large;
}

bool in_bucket(const Box& box, SizeBucket bucket) {
  return bucket == SizeBucket::All || size_bucket(box) == bucket;
}

double average_precision(const std::vector<bool>& tp, int num_gt) {
  if (num_gt <= 0) return 0.0;
  const std::size_t n = tp.size();
  std::vector<double> recall(n + 2, 0.0), precision(n + 2, 0.0);
  int hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += tp[i] ? 1 : 0;
    recall[i + 1] = static_cast<double>(hits) / num_gt;
    precision[i + 1] = static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  recall[n + 1] = recall[n];
  for (std::size_t i = n + 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < n + 2; ++i) {
    ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  }
  return ap;
}

double evaluate_bucket(const std::vector<std::vector<DetectionBox>>& detections,
                       const std::vector<std::vector<GroundTruth>>& ground_truth, int n_classes,
                       double iou_thresh, SizeBucket bucket, std::vector<double>* per_class) {
  if (detections.size() != ground_truth.size()) {
    throw PreconditionError("evaluate_ap: detection and ground-truth image counts differ");
  }
  struct Candidate {
    double score;
    std::size_t image;
    const DetectionBox* det;
  };
  double total = 0.0;
  int counted = 0;
  if (per_class) per_class->assign(n_classes, std::numeric_limits<double>::quiet_NaN());

  for (int c = 0; c < n_classes; ++c) {
    std::vector<Candidate> cands;
    for (std::size_t img = 0; img < detections.size(); ++img) {
      for (const DetectionBox& d : detections[img]) {
        if (d.class_idx == c) cands.push_back({d.score, img, &d});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    int num_gt = 0;
    std::vector<std::vector<bool>> used(ground_truth.size());
    for (std::size_t img = 0; img < ground_truth.size(); ++img) {
      used[img].assign(ground_truth[img].size(), false);
      for (const GroundTruth& g : ground_truth[img]) {
        if (g.class_idx == c && in_bucket(g.box, bucket)) ++num_gt;
      }
    }

    std::vector<bool> tp;
    for (const Candidate& cand : cands) {
      const auto& gts = ground_truth[cand.image];
      double best = -1.0;
      int best_g = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].class_idx != c || used[cand.image][g]) continue;
        double v = iou(cand.det->box, gts[g].box);
        if (v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0 && best >= iou_thresh) {
        used[cand.image][best_g] = true;
        if (in_bucket(gts[best_g].box, bucket)) tp.push_back(true);
      } else if (in_bucket(cand.det->box, bucket)) {
        tp.push_back(false);
      }
    }

    if (num_gt == 0 && tp.empty()) continue;
    double ap = average_precision(tp, num_gt);
    if (per_class) (*per_class)[c] = ap;
    total += ap;
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

ApReport evaluate_ap(const std::vector<std::vector<DetectionBox>>& detections,
                     const std::vector<std::vector<GroundTruth>>& ground_truth, int n_classes,
                     double iou_thresh) {
  ApReport r;
  r.ap = evaluate_bucket(detections, ground_truth, n_classes, iou_thresh, SizeBucket::All,
                         &r.per_class);
  r.ap_small = evaluate_bucket(detections, ground_truth, n_classes, iou_thresh, SizeBucket::Small);
  r.ap_medium =
      evaluate_bucket(detections, ground_truth, n_classes, iou_thresh, SizeBucket::Medium);
  r.ap_large = evaluate_bucket(detections, ground_truth, n_classes, iou_thresh, SizeBucket::Large);
  return r;
}

}  // namespace ipg
