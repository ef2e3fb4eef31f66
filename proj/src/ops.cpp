#include "ipg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ipg/errors.hpp"

namespace ipg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::span<double> grad_of(const Tensor& t) { return t.impl()->grad_buffer(); }

std::size_t idx(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

void require_channel_vector(const Tensor& t, int channels, const char* what) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != channels || s.h != 1 || s.w != 1) {
    throw ShapeError(std::string(what) + " must have shape (1," + std::to_string(channels) +
                     ",1,1), got " + s.str());
  }
}

struct ConvGeometry {
  int c_in, k, stride, pad, dil, h, w, ho, wo;

  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  std::size_t rows() const { return static_cast<std::size_t>(c_in) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
};

// Unfolds one batch item into a (C_in*k*k) x (Ho*Wo) row-major matrix.
void im2col(const double* src, const ConvGeometry& g, double* dst) {
  std::size_t row = 0;
  for (int c = 0; c < g.c_in; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx, ++row) {
        double* out = dst + row * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.stride - g.pad + ky * g.dil;
          double* out_row = out + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out_row, out_row + g.wo, 0.0);
            continue;
          }
          const double* in_row = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.stride - g.pad + kx * g.dil;
            out_row[ox] = (ix >= 0 && ix < g.w) ? in_row[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dst) {
  std::size_t row = 0;
  for (int c = 0; c < g.c_in; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx, ++row) {
        const double* src = cols + row * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.stride - g.pad + ky * g.dil;
          if (iy < 0 || iy >= g.h) continue;
          double* in_row = plane + static_cast<std::size_t>(iy) * g.w;
          const double* src_row = src + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.stride - g.pad + kx * g.dil;
            if (ix >= 0 && ix < g.w) in_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

// Align-corners source coordinate table for resampling `in` samples to `out`.
// Samples are blended as a + t * (b - a) so constant signals stay exact.
struct LerpTap {
  int i0, i1;
  double t;
};

std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  for (int o = 0; o < out; ++o) {
    double src = out > 1 ? static_cast<double>(o) * (in - 1) / (out - 1) : 0.0;
    int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

Tensor identity_copy(const Tensor& input) {
  std::vector<double> out(input.values().begin(), input.values().end());
  return Tensor::make_result(input.shape(), std::move(out), {input},
                             [input](const detail::TensorImpl& o) {
                               auto gi = grad_of(input);
                               for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
                             });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              ConvOptions options) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  if (options.stride < 1 || options.padding < 0 || options.dilation < 1) {
    throw ShapeError("conv2d: invalid stride/padding/dilation");
  }
  if (bias.defined()) require_channel_vector(bias, ws.n, "conv2d bias");

  ConvGeometry g{xs.c, ws.h, options.stride, options.padding, options.dilation, xs.h, xs.w, 0, 0};
  int span = g.dil * (g.k - 1) + 1;
  g.ho = (xs.h + 2 * g.pad - span) / g.stride + 1;
  g.wo = (xs.w + 2 * g.pad - span) / g.stride + 1;
  if (xs.h + 2 * g.pad - span < 0 || xs.w + 2 * g.pad - span < 0 || g.ho < 1 || g.wo < 1) {
    throw ShapeError("conv2d: non-positive output size for input " + xs.str() + " kernel " +
                     std::to_string(g.k));
  }

  const int c_out = ws.n;
  Shape os{xs.n, c_out, g.ho, g.wo};
  std::vector<double> out(os.numel());
  std::vector<double> cols(g.pointwise() ? 0 : g.rows() * g.cols());
  ConstMapMat wmat(weight.values().data(), c_out, g.rows());
  const std::size_t in_item = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_item = static_cast<std::size_t>(c_out) * g.cols();

  for (int b = 0; b < xs.n; ++b) {
    const double* src = input.values().data() + b * in_item;
    const double* colp = src;
    if (!g.pointwise()) {
      im2col(src, g, cols.data());
      colp = cols.data();
    }
    MapMat omat(out.data() + b * out_item, c_out, g.cols());
    omat.noalias() = wmat * ConstMapMat(colp, g.rows(), g.cols());
    if (bias.defined()) {
      for (int c = 0; c < c_out; ++c) omat.row(c).array() += bias.values()[c];
    }
  }

  return Tensor::make_result(
      os, std::move(out), {input, weight, bias}, [input, weight, bias, g](const detail::TensorImpl& o) {
        const Shape& xs = input.shape();
        const int c_out = weight.shape().n;
        const std::size_t in_item = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
        const std::size_t out_item = static_cast<std::size_t>(c_out) * g.cols();
        ConstMapMat wmat(weight.values().data(), c_out, g.rows());
        std::vector<double> cols(g.pointwise() ? 0 : g.rows() * g.cols());
        std::vector<double> dcols(g.rows() * g.cols());
        for (int b = 0; b < xs.n; ++b) {
          ConstMapMat dy(o.grad.data() + b * out_item, c_out, g.cols());
          if (weight.requires_grad()) {
            const double* src = input.values().data() + b * in_item;
            const double* colp = src;
            if (!g.pointwise()) {
              im2col(src, g, cols.data());
              colp = cols.data();
            }
            MapMat dw(grad_of(weight).data(), c_out, g.rows());
            dw.noalias() += dy * ConstMapMat(colp, g.rows(), g.cols()).transpose();
          }
          if (bias.defined() && bias.requires_grad()) {
            auto db = grad_of(bias);
            // Plain loop: Eigen's vectorized sum depends on the buffer's alignment.
            for (int c = 0; c < c_out; ++c) {
              double acc = 0.0;
              for (Eigen::Index k = 0; k < dy.cols(); ++k) acc += dy(c, k);
              db[c] += acc;
            }
          }
          if (input.requires_grad()) {
            double* dx = grad_of(input).data() + b * in_item;
            if (g.pointwise()) {
              MapMat(dx, g.rows(), g.cols()).noalias() += wmat.transpose() * dy;
            } else {
              MapMat(dcols.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * dy;
              col2im_add(dcols.data(), g, dx);
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding) {
  const Shape& s = input.shape();
  if (kernel < 1 || stride < 1 || padding < 0) throw ShapeError("max_pool2d: invalid geometry");
  int ho = (s.h + 2 * padding - kernel) / stride + 1;
  int wo = (s.w + 2 * padding - kernel) / stride + 1;
  if (s.h + 2 * padding < kernel || s.w + 2 * padding < kernel || ho < 1 || wo < 1) {
    throw ShapeError("max_pool2d: non-positive output size for " + s.str());
  }
  Shape os{s.n, s.c, ho, wo};
  std::vector<double> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const auto x = input.values();
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          bool found = false;
          for (int ky = 0; ky < kernel; ++ky) {
            int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= s.h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= s.w) continue;
              std::size_t i = idx(s, n, c, iy, ix);
              if (!found || x[i] > best) {
                best = x[i];
                best_i = i;
                found = true;
              }
            }
          }
          out[o] = best;
          argmax[o] = best_i;
        }
      }
    }
  }
  if (KinkTrace::active()) {
    for (std::size_t i : argmax) KinkTrace::mix(i);
  }
  return Tensor::make_result(os, std::move(out), {input},
                             [input, argmax = std::move(argmax)](const detail::TensorImpl& o) {
                               auto gi = grad_of(input);
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 gi[argmax[i]] += o.grad[i];
                               }
                             });
}

Tensor maxpool2(const Tensor& input) {
  const Shape& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("maxpool2: spatial dims must be even, got " + s.str());
  }
  return max_pool2d(input, 2, 2, 0);
}

Tensor relu(const Tensor& input) {
  const auto x = input.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (KinkTrace::active()) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      word = (word << 1) | (x[i] > 0.0 ? 1u : 0u);
      if (i % 64 == 63) {
        KinkTrace::mix(word);
        word = 0;
      }
    }
    KinkTrace::mix(word);
  }
  return Tensor::make_result(input.shape(), std::move(out), {input},
                             [input](const detail::TensorImpl& o) {
                               auto gi = grad_of(input);
                               const auto x = input.values();
                               for (std::size_t i = 0; i < x.size(); ++i) {
                                 if (x[i] > 0.0) gi[i] += o.grad[i];
                               }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](const detail::TensorImpl& o) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto g = grad_of(*t);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](const detail::TensorImpl& o) {
    if (a.requires_grad()) {
      auto g = grad_of(a);
      const auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto g = grad_of(b);
      const auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& input, double factor) {
  const auto x = input.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return Tensor::make_result(input.shape(), std::move(out), {input},
                             [input, factor](const detail::TensorImpl& o) {
                               auto g = grad_of(input);
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + as.str() + " vs " + bs.str());
  }
  Shape os{as.n, as.c + bs.c, as.h, as.w};
  std::vector<double> out(os.numel());
  const std::size_t a_item = static_cast<std::size_t>(as.c) * as.plane();
  const std::size_t b_item = static_cast<std::size_t>(bs.c) * bs.plane();
  for (int n = 0; n < as.n; ++n) {
    auto dst = out.begin() + n * (a_item + b_item);
    std::copy_n(a.values().begin() + n * a_item, a_item, dst);
    std::copy_n(b.values().begin() + n * b_item, b_item, dst + a_item);
  }
  return Tensor::make_result(os, std::move(out), {a, b},
                             [a, b, a_item, b_item](const detail::TensorImpl& o) {
                               for (int n = 0; n < a.shape().n; ++n) {
                                 const double* src = o.grad.data() + n * (a_item + b_item);
                                 if (a.requires_grad()) {
                                   double* g = grad_of(a).data() + n * a_item;
                                   for (std::size_t i = 0; i < a_item; ++i) g[i] += src[i];
                                 }
                                 if (b.requires_grad()) {
                                   double* g = grad_of(b).data() + n * b_item;
                                   for (std::size_t i = 0; i < b_item; ++i) g[i] += src[a_item + i];
                                 }
                               }
                             });
}

Tensor slice_channels(const Tensor& input, int begin, int count) {
  const Shape& s = input.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") outside " + s.str());
  }
  Shape os{s.n, count, s.h, s.w};
  std::vector<double> out(os.numel());
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(input.values().begin() + idx(s, n, begin, 0, 0), count * plane,
                out.begin() + n * count * plane);
  }
  return Tensor::make_result(os, std::move(out), {input},
                             [input, begin, count](const detail::TensorImpl& o) {
                               const Shape& s = input.shape();
                               auto g = grad_of(input);
                               const std::size_t len = count * s.plane();
                               for (int n = 0; n < s.n; ++n) {
                                 double* dst = g.data() + idx(s, n, begin, 0, 0);
                                 const double* src = o.grad.data() + n * len;
                                 for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                               }
                             });
}

Tensor sum(const Tensor& input) {
  double total = 0.0;
  for (double v : input.values()) total += v;
  return Tensor::make_result(Shape{}, {total}, {input}, [input](const detail::TensorImpl& o) {
    auto g = grad_of(input);
    for (double& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& input) {
  return scale(sum(input), 1.0 / static_cast<double>(input.numel()));
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode, double momentum, double eps) {
  const Shape s = input.shape();
  require_channel_vector(gamma, s.c, "batch_norm gamma");
  require_channel_vector(beta, s.c, "batch_norm beta");
  require_channel_vector(stats.running_mean, s.c, "batch_norm running_mean");
  require_channel_vector(stats.running_var, s.c, "batch_norm running_var");

  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  const auto x = input.values();
  std::vector<double> mu(s.c), inv_std(s.c);

  if (mode == Mode::Train) {
    auto rm = stats.running_mean.mutable_values();
    auto rv = stats.running_var.mutable_values();
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.data() + idx(s, n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      double m = acc / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.data() + idx(s, n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      double var = sq / count;
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      // Running variance tracks the same population estimate used above.
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mu[c] = stats.running_mean.values()[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var.values()[c] + eps);
    }
  }

  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = idx(s, n, c, 0, 0);
      const double gm = gamma.values()[c];
      const double bt = beta.values()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[base + i] = (x[base + i] - mu[c]) * inv_std[c];
        out[base + i] = gm * xhat[base + i] + bt;
      }
    }
  }

  return Tensor::make_result(
      s, std::move(out), {input, gamma, beta},
      [input, gamma, beta, mode, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const detail::TensorImpl& o) {
        const Shape& s = input.shape();
        const std::size_t plane = s.plane();
        const double count = static_cast<double>(s.n) * plane;
        const auto& dy = o.grad;
        for (int c = 0; c < s.c; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < s.n; ++n) {
            const std::size_t base = idx(s, n, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * xhat[base + i];
            }
          }
          if (gamma.requires_grad()) grad_of(gamma)[c] += sum_dy_xhat;
          if (beta.requires_grad()) grad_of(beta)[c] += sum_dy;
          if (!input.requires_grad()) continue;
          auto dx = grad_of(input);
          const double gm = gamma.values()[c];
          for (int n = 0; n < s.n; ++n) {
            const std::size_t base = idx(s, n, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == Mode::Train) {
                dx[base + i] += gm * inv_std[c] *
                                (dy[base + i] - sum_dy / count - xhat[base + i] * sum_dy_xhat / count);
              } else {
                dx[base + i] += gm * inv_std[c] * dy[base + i];
              }
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& input, const Tensor& scale_param, const Tensor& shift, double eps) {
  const Shape s = input.shape();
  require_channel_vector(scale_param, s.c, "layer_norm scale");
  require_channel_vector(shift, s.c, "layer_norm shift");
  const std::size_t plane = s.plane();
  const auto x = input.values();
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(static_cast<std::size_t>(s.n) * plane);
  std::vector<double> out(x.size());
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      for (int c = 0; c < s.c; ++c) acc += x[idx(s, n, c, 0, 0) + p];
      double m = acc / s.c;
      double sq = 0.0;
      for (int c = 0; c < s.c; ++c) {
        double d = x[idx(s, n, c, 0, 0) + p] - m;
        sq += d * d;
      }
      double is = 1.0 / std::sqrt(sq / s.c + eps);
      inv_std[n * plane + p] = is;
      for (int c = 0; c < s.c; ++c) {
        std::size_t i = idx(s, n, c, 0, 0) + p;
        xhat[i] = (x[i] - m) * is;
        out[i] = scale_param.values()[c] * xhat[i] + shift.values()[c];
      }
    }
  }
  return Tensor::make_result(
      s, std::move(out), {input, scale_param, shift},
      [input, scale_param, shift, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const detail::TensorImpl& o) {
        const Shape& s = input.shape();
        const std::size_t plane = s.plane();
        const auto& dy = o.grad;
        const auto sc = scale_param.values();
        for (int n = 0; n < s.n; ++n) {
          for (std::size_t p = 0; p < plane; ++p) {
            double sum_g = 0.0, sum_g_xhat = 0.0;
            for (int c = 0; c < s.c; ++c) {
              std::size_t i = idx(s, n, c, 0, 0) + p;
              double gx = dy[i] * sc[c];
              sum_g += gx;
              sum_g_xhat += gx * xhat[i];
              if (scale_param.requires_grad()) grad_of(scale_param)[c] += dy[i] * xhat[i];
              if (shift.requires_grad()) grad_of(shift)[c] += dy[i];
            }
            if (!input.requires_grad()) continue;
            auto dx = grad_of(input);
            const double is = inv_std[n * plane + p];
            for (int c = 0; c < s.c; ++c) {
              std::size_t i = idx(s, n, c, 0, 0) + p;
              dx[i] += is * (dy[i] * sc[c] - sum_g / s.c - xhat[i] * sum_g_xhat / s.c);
            }
          }
        }
      });
}

Tensor resize_bilinear(const Tensor& input, int out_h, int out_w) {
  const Shape& s = input.shape();
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output dims must be >= 1");
  if (out_h == s.h && out_w == s.w) return identity_copy(input);

  auto ty = lerp_taps(s.h, out_h);
  auto tx = lerp_taps(s.w, out_w);
  Shape os{s.n, s.c, out_h, out_w};
  std::vector<double> out(os.numel());
  const auto x = input.values();
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.data() + idx(s, n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const LerpTap& a = ty[oy];
        const double* r0 = p + static_cast<std::size_t>(a.i0) * s.w;
        const double* r1 = p + static_cast<std::size_t>(a.i1) * s.w;
        for (int ox = 0; ox < out_w; ++ox, ++o) {
          const LerpTap& b = tx[ox];
          double top = r0[b.i0] + b.t * (r0[b.i1] - r0[b.i0]);
          double bot = r1[b.i0] + b.t * (r1[b.i1] - r1[b.i0]);
          out[o] = top + a.t * (bot - top);
        }
      }
    }
  }
  return Tensor::make_result(
      os, std::move(out), {input},
      [input, ty = std::move(ty), tx = std::move(tx)](const detail::TensorImpl& o) {
        const Shape& s = input.shape();
        auto g = grad_of(input);
        std::size_t k = 0;
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            double* p = g.data() + idx(s, n, c, 0, 0);
            for (const LerpTap& a : ty) {
              double* r0 = p + static_cast<std::size_t>(a.i0) * s.w;
              double* r1 = p + static_cast<std::size_t>(a.i1) * s.w;
              for (const LerpTap& b : tx) {
                double d = o.grad[k++];
                double top = (1.0 - a.t) * d;
                double bot = a.t * d;
                r0[b.i0] += (1.0 - b.t) * top;
                r0[b.i1] += b.t * top;
                r1[b.i0] += (1.0 - b.t) * bot;
                r1[b.i1] += b.t * bot;
              }
            }
          }
        }
      });
}

Tensor channel_interp(const Tensor& input, int out_channels) {
  const Shape& s = input.shape();
  if (out_channels < 1) throw ShapeError("channel_interp: out_channels must be >= 1");
  if (out_channels == s.c) return identity_copy(input);

  auto taps = lerp_taps(s.c, out_channels);
  Shape os{s.n, out_channels, s.h, s.w};
  std::vector<double> out(os.numel());
  const auto x = input.values();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < out_channels; ++oc) {
      const LerpTap& t = taps[oc];
      const double* a = x.data() + idx(s, n, t.i0, 0, 0);
      const double* b = x.data() + idx(s, n, t.i1, 0, 0);
      double* dst = out.data() + idx(os, n, oc, 0, 0);
      for (std::size_t p = 0; p < plane; ++p) dst[p] = a[p] + t.t * (b[p] - a[p]);
    }
  }
  return Tensor::make_result(os, std::move(out), {input},
                             [input, taps = std::move(taps), os](const detail::TensorImpl& o) {
                               const Shape& s = input.shape();
                               const std::size_t plane = s.plane();
                               auto g = grad_of(input);
                               for (int n = 0; n < s.n; ++n) {
                                 for (int oc = 0; oc < os.c; ++oc) {
                                   const LerpTap& t = taps[oc];
                                   double* a = g.data() + idx(s, n, t.i0, 0, 0);
                                   double* b = g.data() + idx(s, n, t.i1, 0, 0);
                                   const double* src = o.grad.data() + idx(os, n, oc, 0, 0);
                                   for (std::size_t p = 0; p < plane; ++p) {
                                     a[p] += (1.0 - t.t) * src[p];
                                     b[p] += t.t * src[p];
                                   }
                                 }
                               }
                             });
}

}  // namespace ipg
