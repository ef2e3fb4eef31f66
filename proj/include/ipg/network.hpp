#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ipg/backbone.hpp"
#include "ipg/detector.hpp"

namespace ipg {

// Backbone (with IPG fusion), FPN over the last k stage outputs, and the
// detection head, all drawing parameters from one store.
class IpgNet {
 public:
  IpgNet(const NetworkConfig& config, std::uint64_t seed);

  struct Output {
    BackboneOutput backbone;
    std::vector<Tensor> fpn;
    DetectionHead::Output head;
  };

  // `images`: normalized batch (B, C, H, W).
  Output forward(const Tensor& images, Mode mode);

  std::vector<Anchor> anchors(const Output& out) const;

  const NetworkConfig& config() const { return config_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  Backbone& backbone() { return *backbone_; }
  Fpn& fpn() { return *fpn_; }
  const DetectionHead& head() const { return *head_; }

 private:
  NetworkConfig config_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Fpn> fpn_;
  std::unique_ptr<DetectionHead> head_;
};

}  // namespace ipg
