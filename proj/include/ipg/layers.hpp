#pragma once

#include <optional>
#include <string>

#include "ipg/ops.hpp"
#include "ipg/params.hpp"

namespace ipg {

struct Conv {
  Tensor weight;
  Tensor bias;  // undefined when the conv has none
  ConvOptions options;

  static Conv make(ParamStore& store, const std::string& name, int c_in, int c_out, int kernel,
                   ConvOptions options = {}, bool with_bias = false,
                   Init weight_init = Init::kaiming(), Init bias_init = Init::zeros());

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;

  static BatchNorm make(ParamStore& store, const std::string& name, int channels);
  Tensor operator()(const Tensor& x, Mode mode) { return batch_norm(x, gamma, beta, stats, mode); }
};

struct LayerNorm {
  Tensor scale;
  Tensor shift;

  static LayerNorm make(ParamStore& store, const std::string& name, int channels);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, scale, shift); }
};

// ResNet bottleneck: 1x1 reduce -> 3x3 (carries stride / dilation) -> 1x1
// expand, each followed by batch norm; projection shortcut when requested.
class Bottleneck {
 public:
  Bottleneck(ParamStore& store, const std::string& name, int c_in, int c_mid, int c_out,
             int stride, int dilation, bool projection);

  Tensor forward(const Tensor& x, Mode mode);
  int out_channels() const { return expand_.out_channels(); }

 private:
  Conv reduce_, conv_, expand_;
  BatchNorm bn1_, bn2_, bn3_;
  std::optional<Conv> proj_;
  std::optional<BatchNorm> proj_bn_;
};

}  // namespace ipg
