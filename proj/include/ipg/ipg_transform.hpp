#pragma once

#include <string>

#include "ipg/layers.hpp"

namespace ipg {

// Shallow extractor f_i for pyramid level i: 7x7 stride-2 conv, BN, ReLU,
// 2x2 max pool, then one bottleneck residual block that widens to
// c1 * 2^i channels. Output stride is 4 relative to the level's image.
class IpgTransformLevel {
 public:
  struct Options {
    int stem_width = 0;   // 0: derived from c1
    int stem_stride = 2;  // anything else breaks stage alignment
  };

  IpgTransformLevel(ParamStore& store, const std::string& name, int level, int c1,
                    int image_channels = 3);
  IpgTransformLevel(ParamStore& store, const std::string& name, int level, int c1,
                    int image_channels, Options options);

  Tensor forward(const Tensor& image, Mode mode);

  int level() const { return level_; }
  int out_channels() const { return out_channels_; }
  // Total downsampling of F_i relative to I_0.
  int stride_from_input() const { return stem_stride_ * 2 * (1 << level_); }

 private:
  int level_;
  int out_channels_;
  int stem_stride_;
  Conv stem_;
  BatchNorm stem_bn_;
  Bottleneck residual_;
};

int ipg_stem_width(int c1);

}  // namespace ipg
