#include "ipg/network.hpp"

namespace ipg {

IpgNet::IpgNet(const NetworkConfig& config, std::uint64_t seed)
    : config_(config), store_(std::make_unique<ParamStore>(seed)) {
  backbone_ = std::make_unique<Backbone>(*store_, config_);
  std::vector<int> widths;
  const int k = config_.used_head_levels();
  for (int s = config_.n_stages - k + 1; s <= config_.n_stages; ++s) {
    widths.push_back(config_.stage_channels(s));
  }
  fpn_ = std::make_unique<Fpn>(*store_, "fpn", widths, config_.fpn_channels);
  head_ = std::make_unique<DetectionHead>(*store_, "head", config_.fpn_channels, config_.n_classes);
}

IpgNet::Output IpgNet::forward(const Tensor& images, Mode mode) {
  Output out;
  out.backbone = backbone_->forward(build_pyramid(images, config_.pyramid_levels), mode);
  out.fpn = fpn_->forward(last_k_outputs(out.backbone.stages, config_.used_head_levels()));
  out.head = head_->forward(out.fpn);
  return out;
}

std::vector<Anchor> IpgNet::anchors(const Output& out) const {
  return make_anchors(level_geometry(out.head, config_.head_strides()));
}

}  // namespace ipg
