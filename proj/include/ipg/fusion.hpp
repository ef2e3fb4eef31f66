#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ipg/layers.hpp"

namespace ipg {

enum class FusionKind { Sum, ResidualProduct, Concatenation };

// "sum" | "product" | "concat"
FusionKind parse_fusion_kind(std::string_view text);
std::string to_string(FusionKind kind);

// Fusion operator beta(F_i, R_i) -> O_i. The pointwise maps W_s (pyramid
// branch), W_m (backbone branch) and W (output) are 1x1 convolutions; CT
// interpolates F_i along channels to R_i's width before W_s.
//
// Initialization makes every variant start from the plain backbone:
// W_s = 0, W_m = I, W = I (Concatenation: W = [0 | I]).
class Fusion {
 public:
  Fusion(ParamStore& store, const std::string& name, FusionKind kind, int pyramid_channels,
         int backbone_channels);

  Tensor forward(const Tensor& pyramid_feature, const Tensor& backbone_feature) const;

  FusionKind kind() const { return kind_; }
  const Conv& w_s() const { return w_s_; }
  const Conv& w_m() const { return w_m_; }
  const std::optional<Conv>& w_out() const { return w_; }
  const std::optional<LayerNorm>& norm() const { return ln_; }

 private:
  FusionKind kind_;
  int pyramid_channels_;
  int backbone_channels_;
  Conv w_s_;
  Conv w_m_;
  std::optional<Conv> w_;
  std::optional<LayerNorm> ln_;
};

// O = W * (W_s * CT(F) + W_m * R)
Tensor fuse_sum(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m, const Conv& w);
// O = LN(W_s * CT(F) (.) W_m * R + R)
Tensor fuse_residual_product(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m,
                             const LayerNorm& ln);
// O = W * Cat[W_s * CT(F), W_m * R]
Tensor fuse_concat(const Tensor& f, const Tensor& r, const Conv& w_s, const Conv& w_m,
                   const Conv& w);

}  // namespace ipg
