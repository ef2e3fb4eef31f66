#include <doctest.h>

#include <array>
#include <cmath>

#include "ipg/errors.hpp"
#include "ipg/gradsuite.hpp"
#include "ipg/ops.hpp"
#include "test_util.hpp"

using namespace ipg;

namespace {

// Direct-loop convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, ConvOptions o) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const int k = ws.h;
  const int oh = (xs.h + 2 * o.padding - o.dilation * (k - 1) - 1) / o.stride + 1;
  const int ow = (xs.w + 2 * o.padding - o.dilation * (k - 1) - 1) / o.stride + 1;
  Tensor out(Shape{xs.n, ws.n, oh, ow}, 0.0);
  auto v = out.mutable_values();
  std::size_t idx = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int z = 0; z < ow; ++z, ++idx) {
          double acc = b.defined() ? b.values()[co] : 0.0;
          for (int ci = 0; ci < xs.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y * o.stride - o.padding + ky * o.dilation;
                const int ix = z * o.stride - o.padding + kx * o.dilation;
                if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
            }
          }
          v[idx] = acc;
        }
      }
    }
  }
  return out;
}

// Align-corners source coordinate for output index i.
double source(int i, int in, int out) {
  return out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
}

double lerp_at(const std::vector<double>& signal, double pos) {
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min(lo + 1, static_cast<int>(signal.size()) - 1);
  const double t = pos - lo;
  return signal[lo] * (1 - t) + signal[hi] * t;
}

}  // namespace

TEST_CASE("conv2d examples") {
  Tensor ones(Shape{1, 1, 4, 4}, 1.0);
  Tensor w(Shape{1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(ones, w, Tensor());
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  for (double v : y.values()) CHECK(v == 1.0);

  Tensor x(Shape{1, 1, 8, 8}, 0.5);
  Tensor w7(Shape{1, 1, 7, 7}, 0.1);
  CHECK(conv2d(x, w7, Tensor(), {2, 3, 1}).shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("conv2d errors") {
  Tensor x(Shape{1, 2, 4, 4}, 1.0);
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 3, 3, 3}, 1.0), Tensor()), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 2, 7, 7}, 1.0), Tensor()), ShapeError);
}

TEST_CASE("conv2d matches a direct-loop oracle") {
  const ConvOptions configs[] = {{1, 0, 1}, {1, 1, 1}, {2, 1, 1}, {2, 3, 1}, {1, 2, 2}, {2, 0, 1}};
  const int kernels[] = {3, 3, 3, 7, 3, 1};
  for (int c = 0; c < 6; ++c) {
    CAPTURE(c);
    Tensor x = testing::random_tensor({2, 3, 9, 8}, 100 + c);
    Tensor w = testing::random_tensor({4, 3, kernels[c], kernels[c]}, 200 + c);
    Tensor b = testing::random_tensor({1, 4, 1, 1}, 300 + c);
    Tensor got = conv2d(x, w, b, configs[c]);
    Tensor want = naive_conv(x, w, b, configs[c]);
    REQUIRE(got.shape() == want.shape());
    CHECK(testing::max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("maxpool2 examples and tie rule") {
  Tensor x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor y = maxpool2(x);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 4.0);

  Tensor tie(Shape{1, 1, 2, 2}, 7.0);
  tie.set_requires_grad(true);
  backward(sum(maxpool2(tie)));
  CHECK(tie.grad()[0] == 1.0);
  CHECK(tie.grad()[1] == 0.0);
  CHECK(tie.grad()[2] == 0.0);
  CHECK(tie.grad()[3] == 0.0);

  CHECK_THROWS_AS(maxpool2(Tensor(Shape{1, 1, 3, 4}, 0.0)), ShapeError);
}

TEST_CASE("max_pool2d with padding never selects padding") {
  Tensor x(Shape{1, 1, 3, 3}, -5.0);
  Tensor y = max_pool2d(x, 3, 2, 1);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.values()) CHECK(v == -5.0);
}

TEST_CASE("elementwise examples") {
  CHECK(add(Tensor::scalar(2.0), Tensor::scalar(3.0)).item() == 5.0);
  CHECK(mul(Tensor::scalar(2.0), Tensor::scalar(3.0)).item() == 6.0);
  CHECK(relu(Tensor::scalar(-2.0)).item() == 0.0);
  CHECK_THROWS_AS(add(Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(mul(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 1, 2, 2})), ShapeError);
}

TEST_CASE("concat then slice recovers both inputs") {
  Tensor a = testing::random_tensor({1, 2, 4, 4}, 1);
  Tensor b = testing::random_tensor({1, 3, 4, 4}, 2);
  Tensor c = concat_channels(a, b);
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  CHECK(testing::bitwise_equal(slice_channels(c, 0, 2), a));
  CHECK(testing::bitwise_equal(slice_channels(c, 2, 3), b));
  CHECK_THROWS_AS(concat_channels(a, Tensor(Shape{1, 3, 4, 5})), ShapeError);
}

TEST_CASE("batch_norm closed forms") {
  Tensor x(Shape{1, 1, 1, 2}, std::vector<double>{1, 3});
  Tensor g(Shape{1, 1, 1, 1}, 1.0), b(Shape{1, 1, 1, 1}, 0.0);
  BatchNormStats stats{Tensor(Shape{1, 1, 1, 1}, 0.0), Tensor(Shape{1, 1, 1, 1}, 1.0)};
  Tensor y = batch_norm(x, g, b, stats, Mode::Train);
  const double scale_eps = 1.0 / std::sqrt(1.0 + kNormEps);
  CHECK(y.values()[0] == doctest::Approx(-scale_eps).epsilon(1e-15));
  CHECK(y.values()[1] == doctest::Approx(scale_eps).epsilon(1e-15));
  // Running stats move by momentum 0.1 toward mean 2 and population variance 1.
  CHECK(stats.running_mean.item() == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(stats.running_var.item() == doctest::Approx(1.0).epsilon(1e-15));

  Tensor constant(Shape{2, 1, 2, 2}, 4.0);
  Tensor flat = batch_norm(constant, g, b, stats, Mode::Train);
  for (double v : flat.values()) CHECK(v == 0.0);

  // Eval mode uses the running statistics.
  BatchNormStats fixed{Tensor(Shape{1, 1, 1, 1}, 1.0), Tensor(Shape{1, 1, 1, 1}, 4.0)};
  Tensor e = batch_norm(x, g, b, fixed, Mode::Eval);
  CHECK(e.values()[1] == doctest::Approx(2.0 / std::sqrt(4.0 + kNormEps)).epsilon(1e-15));

  CHECK_THROWS_AS(batch_norm(Tensor(Shape{1, 2, 1, 2}), g, b, stats, Mode::Train), ShapeError);
}

TEST_CASE("layer_norm closed forms and moments") {
  Tensor x(Shape{1, 2, 1, 1}, std::vector<double>{1, 3});
  Tensor s(Shape{1, 2, 1, 1}, 1.0), t(Shape{1, 2, 1, 1}, 0.0);
  Tensor y = layer_norm(x, s, t);
  CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-5));

  Tensor single = testing::random_tensor({2, 1, 3, 3}, 4);
  Tensor s1(Shape{1, 1, 1, 1}, 1.0), t1(Shape{1, 1, 1, 1}, 0.0);
  Tensor zeros = layer_norm(single, s1, t1);
  for (double v : zeros.values()) CHECK(v == 0.0);

  Tensor r = testing::random_tensor({2, 6, 3, 3}, 9, -10, 10);
  Tensor s6(Shape{1, 6, 1, 1}, 1.0), t6(Shape{1, 6, 1, 1}, 0.0);
  Tensor n = layer_norm(r, s6, t6);
  for (int b = 0; b < 2; ++b) {
    for (int yy = 0; yy < 3; ++yy) {
      for (int xx = 0; xx < 3; ++xx) {
        double m = 0, v = 0, rm = 0, rv = 0;
        for (int c = 0; c < 6; ++c) m += n.at(b, c, yy, xx) / 6;
        for (int c = 0; c < 6; ++c) v += (n.at(b, c, yy, xx) - m) * (n.at(b, c, yy, xx) - m) / 6;
        for (int c = 0; c < 6; ++c) rm += r.at(b, c, yy, xx) / 6;
        for (int c = 0; c < 6; ++c) rv += (r.at(b, c, yy, xx) - rm) * (r.at(b, c, yy, xx) - rm) / 6;
        CHECK(std::abs(m) < 1e-10);
        CHECK(std::abs(v - rv / (rv + kNormEps)) < 1e-12);
      }
    }
  }
}

TEST_CASE("resize_bilinear examples") {
  Tensor row(Shape{1, 1, 1, 2}, std::vector<double>{0, 2});
  Tensor y = resize_bilinear(row, 1, 3);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 1.0);
  CHECK(y.values()[2] == 2.0);

  Tensor x = testing::random_tensor({2, 3, 5, 4}, 3);
  CHECK(testing::bitwise_equal(resize_bilinear(x, 5, 4), x));
}

TEST_CASE("resize_bilinear matches a separable align-corners oracle") {
  for (auto [ih, iw, oh, ow] : {std::array{5, 4, 9, 7}, std::array{8, 8, 4, 4}, std::array{3, 6, 1, 2},
                                std::array{1, 1, 3, 3}}) {
    Tensor x = testing::random_tensor({1, 2, ih, iw}, ih * 31 + iw);
    Tensor y = resize_bilinear(x, oh, ow);
    REQUIRE(y.shape() == Shape{1, 2, oh, ow});
    for (int c = 0; c < 2; ++c) {
      // Interpolate rows first, then columns.
      std::vector<std::vector<double>> rows(ih, std::vector<double>(ow));
      for (int r = 0; r < ih; ++r) {
        std::vector<double> line(iw);
        for (int k = 0; k < iw; ++k) line[k] = x.at(0, c, r, k);
        for (int k = 0; k < ow; ++k) rows[r][k] = lerp_at(line, source(k, iw, ow));
      }
      for (int k = 0; k < ow; ++k) {
        std::vector<double> col(ih);
        for (int r = 0; r < ih; ++r) col[r] = rows[r][k];
        for (int r = 0; r < oh; ++r) {
          CHECK(std::abs(y.at(0, c, r, k) - lerp_at(col, source(r, ih, oh))) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("channel_interp examples and oracle") {
  Tensor x(Shape{1, 2, 1, 1}, std::vector<double>{1, 3});
  Tensor y = channel_interp(x, 3);
  CHECK(y.values()[0] == 1.0);
  CHECK(y.values()[1] == 2.0);
  CHECK(y.values()[2] == 3.0);

  Tensor r = testing::random_tensor({2, 5, 3, 2}, 12);
  CHECK(testing::bitwise_equal(channel_interp(r, 5), r));

  for (int out : {1, 2, 3, 8, 13}) {
    Tensor z = channel_interp(r, out);
    for (int b = 0; b < 2; ++b) {
      for (int yy = 0; yy < 3; ++yy) {
        for (int xx = 0; xx < 2; ++xx) {
          std::vector<double> signal(5);
          for (int c = 0; c < 5; ++c) signal[c] = r.at(b, c, yy, xx);
          for (int c = 0; c < out; ++c) {
            CHECK(std::abs(z.at(b, c, yy, xx) - lerp_at(signal, source(c, 5, out))) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  Tensor x = testing::random_tensor({2, 3, 8, 8}, 1);
  Tensor w = testing::random_tensor({4, 3, 3, 3}, 2);
  auto f = [&] { return resize_bilinear(relu(conv2d(x, w, Tensor(), {1, 1, 1})), 5, 5); };
  CHECK(testing::bitwise_equal(f(), f()));
}

TEST_CASE("finite-difference checks for every op, 10 seeds") {
  for (const std::string& name : gradient_cases("op.")) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(name);
      CAPTURE(seed);
      GradCheckResult r = run_gradient_case(name, seed);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-6);
    }
  }
}
