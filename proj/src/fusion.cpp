#include "ipg/fusion.hpp"

#include "ipg/errors.hpp"

namespace ipg {

namespace {

void require_aligned(const Tensor& f, const Tensor& r) {
  const Shape& fs = f.shape();
  const Shape& rs = r.shape();
  if (fs.n != rs.n || fs.h != rs.h || fs.w != rs.w) {
    throw AlignmentError("fusion: pyramid feature " + fs.str() +
                         " is not spatially aligned with backbone feature " + rs.str());
  }
}

Tensor pyramid_branch(const Tensor& f, const Tensor& r, const Conv& w_s) {
  return w_s(channel_interp(f, r.shape().c));
}

}  // namespace

FusionKind parse_fusion_kind(std::string_view text) {
  if (text == "sum") return FusionKind::Sum;
  if (text == "product") return FusionKind::ResidualProduct;
  if (text == "concat") return FusionKind::Concatenation;
  throw ConfigError("unknown fusion variant '" + std::string(text) +
                    "' (expected sum, product or concat)");
}

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::Sum:
      return "sum";
    case FusionKind::ResidualProduct:
      return "product";
    case FusionKind::Concatenation:
      return "concat";
  }
  return "?";
}

Tensor fuse_sum(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m,
                const Conv& w) {
  require_aligned(f, r);
  return w(add(pyramid_branch(f, r, w_s), w_m(r)));
}

Tensor fuse_residual_product(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m,
                             const LayerNorm& ln) {
  require_aligned(f, r);
  return ln(add(mul(pyramid_branch(f, r, w_s), w_m(r)), r));
}

Tensor fuse_concat(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m,
                   const Conv& w) {
  require_aligned(f, r);
  return w(concat_channels(pyramid_branch(f, r, w_s), w_m(r)));
}

Fusion::Fusion(ParamStore& store, const std::string& name, FusionKind kind, int pyramid_channels,
               int backbone_channels)
    : kind_(kind),
      pyramid_channels_(pyramid_channels),
      backbone_channels_(backbone_channels),
      w_s_(Conv::make(store, name + ".w_s", backbone_channels, backbone_channels, 1, {}, false,
                      Init::zeros())),
      w_m_(Conv::make(store, name + ".w_m", backbone_channels, backbone_channels, 1, {}, false,
                      Init::identity())) {
  const int c = backbone_channels;
  switch (kind) {
    case FusionKind::Sum:
      w_ = Conv::make(store, name + ".w", c, c, 1, {}, true, Init::identity());
      break;
    case FusionKind::Concatenation:
      w_ = Conv::make(store, name + ".w", 2 * c, c, 1, {}, true, Init::right_identity());
      break;
    case FusionKind::ResidualProduct:
      ln_ = LayerNorm::make(store, name + ".ln", c);
      break;
  }
}

Tensor Fusion::forward(const Tensor& pyramid_feature, const Tensor& backbone_feature) const {
  if (pyramid_feature.shape().c != pyramid_channels_ ||
      backbone_feature.shape().c != backbone_channels_) {
    throw ShapeError("fusion: expected " + std::to_string(pyramid_channels_) + " / " +
                     std::to_string(backbone_channels_) + " channels, got " +
                     pyramid_feature.shape().str() + " / " + backbone_feature.shape().str());
  }
  switch (kind_) {
    case FusionKind::Sum:
      return fuse_sum(pyramid_feature, backbone_feature, w_s_, w_m_, *w_);
    case FusionKind::ResidualProduct:
      return fuse_residual_product(pyramid_feature, backbone_feature, w_s_, w_m_, *ln_);
    case FusionKind::Concatenation:
      return fuse_concat(pyramid_feature, backbone_feature, w_s_, w_m_, *w_);
  }
  throw ConfigError("unreachable fusion kind");
}

}  // namespace ipg
