#pragma once

#include <vector>

namespace ipg {

// SGD learning-rate schedule with linear warmup and step decay. Epochs are
// 1-based; iterations are 0-based and global across epochs.
struct TrainSchedule {
  double base_lr = 0.005;
  int total_epochs = 12;
  std::vector<int> decay_epochs = {7, 11};
  double decay_factor = 0.1;
  int warmup_iters = 50;
  double warmup_ratio = 1.0 / 3.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 4;
  double grad_clip_norm = 5.0;  // global L2 norm; 0 disables clipping

  // Throws ConfigError.
  void validate() const;
};

// base_lr * decay_factor^(decay epochs <= epoch), scaled during the first
// warmup_iters iterations by a ramp from warmup_ratio to 1.
double lr_at(const TrainSchedule& schedule, int epoch, long iter);

}  // namespace ipg
