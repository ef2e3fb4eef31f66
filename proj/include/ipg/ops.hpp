#pragma once

#include "ipg/tensor.hpp"

namespace ipg {

enum class Mode { Train, Eval };

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// weight: (C_out, C_in, k, k); bias: undefined or (1, C_out, 1, 1).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              ConvOptions options = {});

// Max pooling with implicit -inf padding. Ties route the gradient to the
// first element in row-major window order.
Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding);

// 2x2 / stride 2 pooling; H and W must be even.
Tensor maxpool2(const Tensor& input);

Tensor relu(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, double factor);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& input, int begin, int count);

Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

struct BatchNormStats {
  Tensor running_mean;  // (1, C, 1, 1)
  Tensor running_var;   // (1, C, 1, 1)
};

constexpr double kNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

// Train mode normalizes with batch statistics (population variance) and
// updates `stats` in place; eval mode normalizes with `stats`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode, double momentum = kBatchNormMomentum,
                  double eps = kNormEps);

// Normalizes across channels at every (n, y, x), then applies the per-channel
// affine `scale` / `shift` of shape (1, C, 1, 1).
Tensor layer_norm(const Tensor& input, const Tensor& scale, const Tensor& shift,
                  double eps = kNormEps);

// Align-corners bilinear resampling.
Tensor resize_bilinear(const Tensor& input, int out_h, int out_w);

// Align-corners linear interpolation along the channel axis.
Tensor channel_interp(const Tensor& input, int out_channels);

}  // namespace ipg
