#include "ipg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ipg/errors.hpp"

namespace ipg {

namespace {

// Largest log-scale delta accepted when decoding.
const double kMaxLogScale = std::log(1000.0 / 16.0);

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t flat(const Shape& s, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
}

}  // namespace

double Box::area() const { return valid() ? width() * height() : 0.0; }

double iou(const Box& a, const Box& b) {
  double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0 || iy <= 0) return 0.0;
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Anchor> make_anchors(const std::vector<LevelGeometry>& levels) {
  std::vector<Anchor> anchors;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const LevelGeometry& g = levels[l];
    const double side = 4.0 * g.stride;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        anchors.push_back({(x + 0.5) * g.stride, (y + 0.5) * g.stride, side, side,
                           static_cast<int>(l)});
      }
    }
  }
  return anchors;
}

BoxDeltas encode_box(const Box& box, const Anchor& a) {
  double cx = (box.x_min + box.x_max) / 2;
  double cy = (box.y_min + box.y_max) / 2;
  return {(cx - a.cx) / a.w, (cy - a.cy) / a.h, std::log(box.width() / a.w),
          std::log(box.height() / a.h)};
}

Box decode_box(const BoxDeltas& d, const Anchor& a) {
  double cx = a.cx + d[0] * a.w;
  double cy = a.cy + d[1] * a.h;
  double w = a.w * std::exp(std::clamp(d[2], -kMaxLogScale, kMaxLogScale));
  double h = a.h * std::exp(std::clamp(d[3], -kMaxLogScale, kMaxLogScale));
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

DetectionHead::DetectionHead(ParamStore& store, const std::string& name, int channels,
                             int n_classes)
    : channels_(channels),
      n_classes_(n_classes),
      cls1_(Conv::make(store, name + ".cls1", channels, channels, 3, ConvOptions{1, 1, 1}, true,
                       Init::normal(0.01))),
      cls2_(Conv::make(store, name + ".cls2", channels, n_classes, 3, ConvOptions{1, 1, 1}, true,
                       Init::normal(0.01), Init::constant(-std::log((1.0 - 0.01) / 0.01)))),
      box1_(Conv::make(store, name + ".box1", channels, channels, 3, ConvOptions{1, 1, 1}, true,
                       Init::normal(0.01))),
      box2_(Conv::make(store, name + ".box2", channels, 4, 3, ConvOptions{1, 1, 1}, true,
                       Init::normal(0.01))) {}

DetectionHead::Output DetectionHead::forward(const std::vector<Tensor>& features) const {
  Output out;
  for (const Tensor& p : features) {
    if (p.shape().c != channels_) {
      throw ShapeError("detection head expects " + std::to_string(channels_) +
                       " channels, got " + p.shape().str());
    }
    out.cls.push_back(cls2_(relu(cls1_(p))));
    out.box.push_back(box2_(relu(box1_(p))));
  }
  return out;
}

DetectionHead::Output head_forward(const DetectionHead& head, const std::vector<Tensor>& features) {
  return head.forward(features);
}

std::vector<LevelGeometry> level_geometry(const DetectionHead::Output& out,
                                          const std::vector<int>& strides) {
  if (strides.size() != out.cls.size()) throw ShapeError("stride list does not match head levels");
  std::vector<LevelGeometry> g;
  for (std::size_t l = 0; l < out.cls.size(); ++l) {
    g.push_back({out.cls[l].shape().h, out.cls[l].shape().w, strides[l]});
  }
  return g;
}

int AnchorTargets::num_positive() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(), [](int l) { return l >= 0; }));
}

AnchorTargets assign_targets(const std::vector<Anchor>& anchors,
                             const std::vector<GroundTruth>& gts, AssignParams params) {
  const std::size_t n = anchors.size();
  AnchorTargets t;
  t.labels.assign(n, kNegative);
  t.matched_gt.assign(n, -1);
  t.deltas.assign(n, BoxDeltas{});
  if (gts.empty()) return t;

  std::vector<double> best_iou(n, -1.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(gts.size(), -1.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), 0);
  for (std::size_t a = 0; a < n; ++a) {
    const Box ab = anchors[a].box();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      double v = iou(ab, gts[g].box);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best[g]) {
        gt_best[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (best_iou[a] >= params.positive_iou) {
      t.matched_gt[a] = best_gt[a];
    } else if (best_iou[a] >= params.negative_iou) {
      t.labels[a] = kIgnore;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best[g] > 0.0) t.matched_gt[gt_best_anchor[g]] = static_cast<int>(g);
  }
  for (std::size_t a = 0; a < n; ++a) {
    int g = t.matched_gt[a];
    if (g < 0) continue;
    t.labels[a] = gts[g].class_idx;
    t.deltas[a] = encode_box(gts[g].box, anchors[a]);
  }
  return t;
}

DetectionLoss detection_loss(const DetectionHead::Output& out,
                             const std::vector<AnchorTargets>& targets, LossParams params) {
  const std::size_t levels = out.cls.size();
  if (levels == 0 || out.box.size() != levels) throw ShapeError("detection_loss: empty head output");
  const int batch = out.cls[0].shape().n;
  if (static_cast<int>(targets.size()) != batch) {
    throw ShapeError("detection_loss: " + std::to_string(targets.size()) + " target sets for batch " +
                     std::to_string(batch));
  }

  int positives = 0;
  for (const auto& t : targets) positives += t.num_positive();
  const double norm = 1.0 / std::max(1, positives);

  std::vector<std::vector<double>> dcls(levels), dbox(levels);
  double cls_loss = 0.0, box_loss = 0.0;
  const double a = params.alpha, gm = params.gamma, beta = params.smooth_l1_beta;

  for (std::size_t l = 0; l < levels; ++l) {
    dcls[l].assign(out.cls[l].numel(), 0.0);
    dbox[l].assign(out.box[l].numel(), 0.0);
  }
  for (int b = 0; b < batch; ++b) {
    const AnchorTargets& t = targets[b];
    std::size_t anchor = 0;
    for (std::size_t l = 0; l < levels; ++l) {
      const Shape& cs = out.cls[l].shape();
      const Shape& bs = out.box[l].shape();
      const auto logits = out.cls[l].values();
      const auto deltas = out.box[l].values();
      for (int y = 0; y < cs.h; ++y) {
        for (int x = 0; x < cs.w; ++x, ++anchor) {
          if (anchor >= t.labels.size()) throw ShapeError("detection_loss: anchor count mismatch");
          const int label = t.labels[anchor];
          if (label == kIgnore) continue;
          for (int c = 0; c < cs.c; ++c) {
            const std::size_t i = flat(cs, b, c, y, x);
            const double z = logits[i];
            const double p = sigmoid(z);
            if (c == label) {
              const double log_p = -softplus(-z);
              const double q = 1.0 - p;
              cls_loss += -a * std::pow(q, gm) * log_p;
              dcls[l][i] = norm * a * std::pow(q, gm) * (gm * p * log_p - q);
            } else {
              const double log_q = -softplus(z);
              cls_loss += -(1.0 - a) * std::pow(p, gm) * log_q;
              dcls[l][i] = norm * (1.0 - a) * std::pow(p, gm) * (p - gm * (1.0 - p) * log_q);
            }
          }
          if (label < 0) continue;
          for (int k = 0; k < 4; ++k) {
            const std::size_t i = flat(bs, b, k, y, x);
            const double d = deltas[i] - t.deltas[anchor][k];
            const double ad = std::abs(d);
            if (ad < beta) {
              box_loss += 0.5 * d * d / beta;
              dbox[l][i] = norm * d / beta;
            } else {
              box_loss += ad - 0.5 * beta;
              dbox[l][i] = norm * (d > 0 ? 1.0 : -1.0);
            }
          }
        }
      }
    }
    if (anchor != t.labels.size()) throw ShapeError("detection_loss: anchor count mismatch");
  }

  DetectionLoss result;
  result.cls = cls_loss * norm;
  result.box = box_loss * norm;
  std::vector<Tensor> inputs;
  for (std::size_t l = 0; l < levels; ++l) inputs.push_back(out.cls[l]);
  for (std::size_t l = 0; l < levels; ++l) inputs.push_back(out.box[l]);
  result.total = Tensor::make_result(
      Shape{}, {result.cls + result.box}, inputs,
      [inputs, levels, dcls = std::move(dcls), dbox = std::move(dbox)](const detail::TensorImpl& o) {
        const double g = o.grad[0];
        for (std::size_t l = 0; l < levels; ++l) {
          const std::vector<double>* src[2] = {&dcls[l], &dbox[l]};
          const Tensor* dst[2] = {&inputs[l], &inputs[levels + l]};
          for (int k = 0; k < 2; ++k) {
            if (!dst[k]->requires_grad()) continue;
            auto gb = dst[k]->impl()->grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * (*src[k])[i];
          }
        }
      });
  return result;
}

std::vector<std::size_t> greedy_nms(const std::vector<DetectionBox>& boxes, double iou_thresh) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return boxes[i].score > boxes[j].score;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(boxes[i].box, boxes[k].box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<DetectionBox> decode_and_nms(const DetectionHead::Output& out, int b,
                                         const std::vector<Anchor>& anchors, DecodeParams params,
                                         int image_height, int image_width) {
  if (params.score_thresh < 0 || params.score_thresh > 1 || params.iou_thresh < 0 ||
      params.iou_thresh > 1) {
    throw PreconditionError("decode_and_nms: thresholds must lie in [0, 1]");
  }
  const int n_classes = out.cls.at(0).shape().c;
  std::vector<std::vector<DetectionBox>> per_class(n_classes);
  std::size_t anchor = 0;
  for (std::size_t l = 0; l < out.cls.size(); ++l) {
    const Shape& cs = out.cls[l].shape();
    const Shape& bs = out.box[l].shape();
    for (int y = 0; y < cs.h; ++y) {
      for (int x = 0; x < cs.w; ++x, ++anchor) {
        BoxDeltas d;
        bool decoded = false;
        Box box;
        for (int c = 0; c < n_classes; ++c) {
          const double score = sigmoid(out.cls[l].values()[flat(cs, b, c, y, x)]);
          if (score < params.score_thresh) continue;
          if (!decoded) {
            for (int k = 0; k < 4; ++k) d[k] = out.box[l].values()[flat(bs, b, k, y, x)];
            box = decode_box(d, anchors.at(anchor));
            box.x_min = std::clamp(box.x_min, 0.0, static_cast<double>(image_width));
            box.x_max = std::clamp(box.x_max, 0.0, static_cast<double>(image_width));
            box.y_min = std::clamp(box.y_min, 0.0, static_cast<double>(image_height));
            box.y_max = std::clamp(box.y_max, 0.0, static_cast<double>(image_height));
            decoded = true;
          }
          if (!box.valid()) continue;
          per_class[c].push_back({box, c, score});
        }
      }
    }
  }
  if (anchor != anchors.size()) throw ShapeError("decode_and_nms: anchor count mismatch");

  std::vector<DetectionBox> result;
  for (const auto& dets : per_class) {
    for (std::size_t i : greedy_nms(dets, params.iou_thresh)) result.push_back(dets[i]);
  }
  std::stable_sort(result.begin(), result.end(),
                   [](const DetectionBox& a, const DetectionBox& b) { return a.score > b.score; });
  if (static_cast<int>(result.size()) > params.max_boxes) result.resize(params.max_boxes);
  return result;
}

void write_detections(std::ostream& os, int image_id, const std::vector<DetectionBox>& dets) {
  std::ostringstream line;
  line << std::fixed << std::setprecision(6);
  for (const DetectionBox& d : dets) {
    line.str("");
    line << image_id << ' ' << d.class_idx << ' ' << d.score << ' ' << d.box.x_min << ' '
         << d.box.y_min << ' ' << d.box.x_max << ' ' << d.box.y_max << '\n';
    os << line.str();
  }
}

std::vector<DumpedDetection> read_detections(std::istream& is) {
  std::vector<DumpedDetection> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    DumpedDetection d;
    if (!(fields >> d.image_id >> d.det.class_idx >> d.det.score >> d.det.box.x_min >>
          d.det.box.y_min >> d.det.box.x_max >> d.det.box.y_max)) {
      throw PreconditionError("malformed detection line " + std::to_string(line_no) + ": " + line);
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace ipg
