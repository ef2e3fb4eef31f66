#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "ipg/fusion.hpp"
#include "ipg/ipg_transform.hpp"
#include "ipg/layers.hpp"
#include "ipg/pyramid.hpp"

namespace ipg {

// Architecture description. Stages are 1-indexed; fusion at stage s reads
// pyramid level s - 1.
struct NetworkConfig {
  int c1 = 16;
  int n_stages = 4;
  bool keep_last3 = false;
  FusionKind fusion_variant = FusionKind::Sum;
  std::set<int> fusion_stages = {3};
  int pyramid_levels = 4;
  int fpn_channels = 32;
  int n_classes = 3;
  int head_levels = 0;  // FPN/head read the last k stage outputs; 0 = all
  int image_channels = 3;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  int stage_stride(int stage) const;
  int stage_channels(int stage) const;
  int stage_dilation(int stage) const;
  int stem_width() const { return c1; }
  // Input H and W must be multiples of this.
  int required_multiple() const;
  int used_head_levels() const { return head_levels == 0 ? n_stages : head_levels; }
  // Strides of the stage outputs consumed by the FPN, finest first.
  std::vector<int> head_strides() const;
};

struct BackboneOutput {
  std::vector<Tensor> stages;  // O_s where fused, R_s elsewhere; stage order
  std::vector<Tensor> raw;     // R_s before fusion
  std::map<int, Tensor> pyramid_features;  // stage -> F_{s-1}
};

class Backbone {
 public:
  Backbone(ParamStore& store, const NetworkConfig& config);

  BackboneOutput forward(const PyramidSet& pyramid, Mode mode);

  const NetworkConfig& config() const { return config_; }
  int transform_count() const { return static_cast<int>(transforms_.size()); }
  IpgTransformLevel& transform_for_stage(int stage) { return *transforms_.at(stage); }
  // Replaces the pyramid transform for `stage`; test hook for alignment checks.
  void set_transform(int stage, std::unique_ptr<IpgTransformLevel> transform);

 private:
  struct Stage {
    std::vector<Bottleneck> blocks;
  };

  NetworkConfig config_;
  Conv stem_;
  BatchNorm stem_bn_;
  std::vector<Stage> stages_;
  std::map<int, std::unique_ptr<IpgTransformLevel>> transforms_;
  std::map<int, Fusion> fusions_;
};

BackboneOutput forward_backbone(Backbone& backbone, const PyramidSet& pyramid, Mode mode);

// Final k stage outputs.
std::vector<Tensor> last_k_outputs(const std::vector<Tensor>& stage_outputs, int k);

// Top-down pyramid: P_top = lateral(top); P_s = upsample(P_{s+1}) + lateral(s);
// every P passes through a 3x3 smoothing conv.
class Fpn {
 public:
  Fpn(ParamStore& store, const std::string& name, const std::vector<int>& in_channels,
      int fpn_channels);

  std::vector<Tensor> forward(const std::vector<Tensor>& stage_outputs) const;

  std::vector<Conv>& laterals() { return laterals_; }
  int channels() const { return fpn_channels_; }

 private:
  int fpn_channels_;
  std::vector<Conv> laterals_;
  std::vector<Conv> smooth_;
};

}  // namespace ipg
