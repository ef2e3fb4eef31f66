#include "ipg/ipg_transform.hpp"

#include <algorithm>

#include "ipg/errors.hpp"

namespace ipg {

int ipg_stem_width(int c1) { return std::max(4, c1 / 2); }

namespace {

int resolve_stem_width(int c1, const IpgTransformLevel::Options& o) {
  return o.stem_width > 0 ? o.stem_width : ipg_stem_width(c1);
}

}  // namespace

IpgTransformLevel::IpgTransformLevel(ParamStore& store, const std::string& name, int level,
                                     int c1, int image_channels)
    : IpgTransformLevel(store, name, level, c1, image_channels, Options{}) {}

IpgTransformLevel::IpgTransformLevel(ParamStore& store, const std::string& name, int level,
                                     int c1, int image_channels, Options options)
    : level_(level),
      out_channels_(c1 << level),
      stem_stride_(options.stem_stride),
      stem_(Conv::make(store, name + ".stem", image_channels, resolve_stem_width(c1, options), 7,
                       ConvOptions{options.stem_stride, 3, 1})),
      stem_bn_(BatchNorm::make(store, name + ".stem_bn", resolve_stem_width(c1, options))),
      residual_(store, name + ".block", resolve_stem_width(c1, options),
                std::max(2, resolve_stem_width(c1, options) / 2), c1 << level, 1, 1, true) {
  if (level < 0) throw ConfigError("pyramid level must be >= 0");
}

Tensor IpgTransformLevel::forward(const Tensor& image, Mode mode) {
  const Shape& s = image.shape();
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("IPG transform level " + std::to_string(level_) +
                     ": image dims must be multiples of 4, got " + s.str());
  }
  Tensor x = relu(stem_bn_(stem_(image), mode));
  x = maxpool2(x);
  return residual_.forward(x, mode);
}

}  // namespace ipg
