#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ipg/data_synth.hpp"
#include "ipg/evaluate.hpp"
#include "ipg/harness/checkpoint.hpp"
#include "ipg/harness/config.hpp"
#include "ipg/network.hpp"

namespace ipg {

inline const char* const kMetricsHeader =
    "epoch,iter,lr,loss_cls,loss_box,val_ap,val_ap_small,val_ap_medium,val_ap_large";

using LogFn = std::function<void(const std::string&)>;

struct TrainOptions {
  std::string out_dir;        // metrics.csv and epoch_NNN.ipgn land here
  int stop_after_epoch = 0;   // 0 = run all epochs
  std::string resume;         // checkpoint to continue from
  LogFn log;
  int log_every = 0;  // iterations between loss lines; 0 = per-epoch lines only
};

struct TrainResult {
  std::string metrics_path;
  std::string last_checkpoint;
  ApReport val;  // after the last completed epoch
};

// SGD with momentum and L2 weight decay over the train split; after every
// epoch the val split is evaluated, a metrics row appended and a checkpoint
// written. Throws NumericError on a non-finite loss.
TrainResult train(const RunConfig& config, const TrainOptions& options);

// Normalized, padded batch plus the ground truth of each scene.
struct Batch {
  Tensor images;
  std::vector<std::vector<GroundTruth>> truth;
};
Batch make_batch(const std::vector<SynthScene>& scenes, int multiple);

// Loss on one batch (train mode); also returns the per-item targets.
DetectionLoss batch_loss(IpgNet& net, const Batch& batch);

// Momentum SGD over the trainable parameters of `store`; buffers are keyed by
// parameter name and created on first use. Gradients are rescaled to global
// L2 norm `clip_norm` when they exceed it (0 disables), before weight decay.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay, double clip_norm = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay), clip_norm_(clip_norm) {}
  // Returns the gradient norm before clipping.
  double step(ParamStore& store, double lr);

  std::map<std::string, Tensor>& buffers() { return buffers_; }

 private:
  double momentum_;
  double weight_decay_;
  double clip_norm_;
  std::map<std::string, Tensor> buffers_;
};

struct Evaluation {
  ApReport report;
  std::vector<std::vector<DetectionBox>> detections;
  std::vector<std::vector<GroundTruth>> truth;
};
Evaluation evaluate_split(IpgNet& net, const std::vector<SynthScene>& scenes, DecodeParams params,
                          int batch_size);

struct OverfitOptions {
  int iterations = 200;
  double lr = 0.01;
  double clip_norm = 5.0;
  int batch_size = 4;
  std::uint64_t data_seed = 0;
  int image_size = kSynthImageSize;
};

// Repeats one batch; returns the total loss at every iteration.
std::vector<double> overfit_single_batch(const NetworkConfig& model, std::uint64_t seed,
                                         const OverfitOptions& options);

std::string checkpoint_name(int epoch);

}  // namespace ipg
