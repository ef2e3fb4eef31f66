#include "ipg/harness/schedule.hpp"

#include <algorithm>
#include <string>

#include "ipg/errors.hpp"

namespace ipg {

void TrainSchedule::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("schedule: " + msg); };
  if (!(base_lr > 0)) fail("base_lr must be positive");
  if (total_epochs < 1) fail("total_epochs must be >= 1");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) fail("decay_epochs must be strictly increasing");
    if (decay_epochs[i] >= total_epochs) fail("decay epochs must be < total_epochs");
  }
  if (!(warmup_ratio > 0 && warmup_ratio <= 1)) fail("warmup_ratio must lie in (0, 1]");
  if (warmup_iters < 0) fail("warmup_iters must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (momentum < 0 || momentum >= 1) fail("momentum must lie in [0, 1)");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (grad_clip_norm < 0) fail("grad_clip_norm must be >= 0");
}

double lr_at(const TrainSchedule& s, int epoch, long iter) {
  double lr = s.base_lr;
  for (int d : s.decay_epochs) {
    if (d <= epoch) lr *= s.decay_factor;
  }
  if (iter < s.warmup_iters) {
    const double progress = static_cast<double>(std::max(0L, iter)) / s.warmup_iters;
    lr *= s.warmup_ratio + (1.0 - s.warmup_ratio) * progress;
  }
  return lr;
}

}  // namespace ipg
