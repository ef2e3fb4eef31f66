#include <doctest.h>

#include "ipg/errors.hpp"
#include "ipg/pyramid.hpp"
#include "test_util.hpp"

using namespace ipg;

TEST_CASE("four levels with factor two") {
  Tensor img = testing::random_tensor({1, 3, 128, 128}, 1);
  PyramidSet p = build_pyramid(img, 4);
  REQUIRE(p.size() == 4);
  const int sides[] = {128, 64, 32, 16};
  for (int i = 0; i < 4; ++i) {
    CHECK(p[i].shape() == Shape{1, 3, sides[i], sides[i]});
  }
  CHECK(testing::bitwise_equal(p[0], img));
}

TEST_CASE("rectangular input") {
  PyramidSet p = build_pyramid(testing::random_tensor({2, 3, 32, 48}, 2), 3);
  CHECK(p[2].shape() == Shape{2, 3, 8, 12});
}

TEST_CASE("rejects degenerate and indivisible requests") {
  Tensor img(Shape{1, 3, 64, 64}, 0.0);
  CHECK_THROWS_AS(build_pyramid(img, 1), PreconditionError);
  Tensor odd(Shape{1, 3, 36, 64}, 0.0);
  try {
    build_pyramid(odd, 4);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("8") != std::string::npos);
  }
}

TEST_CASE("constant image stays constant at every level") {
  Tensor img(Shape{1, 3, 64, 32}, 0.3141592653589793);
  PyramidSet p = build_pyramid(img, 4);
  for (int i = 0; i < p.size(); ++i) {
    for (double v : p[i].values()) CHECK(v == 0.3141592653589793);
  }
}

TEST_CASE("linear ramps keep their mean") {
  Tensor img(Shape{1, 1, 32, 32}, 0.0);
  auto v = img.mutable_values();
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) v[y * 32 + x] = 0.25 * x - 0.5 * y + 3.0;
  }
  PyramidSet p = build_pyramid(img, 4);
  auto mean_of = [](const Tensor& t) {
    double s = 0;
    for (double x : t.values()) s += x;
    return s / static_cast<double>(t.numel());
  };
  const double m0 = mean_of(p[0]);
  for (int i = 1; i < 4; ++i) CHECK(std::abs(mean_of(p[i]) - m0) < 1e-9);
}
