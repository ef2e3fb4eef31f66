#include <doctest.h>

#include "ipg/backbone.hpp"
#include "ipg/errors.hpp"
#include "ipg/network.hpp"
#include "test_util.hpp"

using namespace ipg;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.c1 = 4;
  c.fpn_channels = 8;
  return c;
}

}  // namespace

TEST_CASE("stride and channel schedule") {
  NetworkConfig c = small_config();
  c.c1 = 16;
  for (int s = 1; s <= 4; ++s) {
    CHECK(c.stage_stride(s) == 4 << (s - 1));
    CHECK(c.stage_channels(s) == 16 << (s - 1));
    CHECK(c.stage_dilation(s) == 1);
  }
  c.n_stages = 6;
  CHECK(c.stage_stride(6) == 128);
  CHECK(c.stage_channels(6) == 128);

  c.n_stages = 7;
  c.keep_last3 = true;
  for (int s = 4; s <= 7; ++s) CHECK(c.stage_stride(s) == 32);
  CHECK(c.stage_dilation(5) == 2);
  CHECK(c.stage_dilation(4) == 1);
  CHECK(c.required_multiple() == 32);
}

TEST_CASE("config validation") {
  auto rejects = [](auto edit) {
    NetworkConfig c = small_config();
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  rejects([](NetworkConfig& c) { c.n_stages = 3; });
  rejects([](NetworkConfig& c) { c.n_stages = 8; });
  rejects([](NetworkConfig& c) { c.keep_last3 = true; });
  rejects([](NetworkConfig& c) { c.c1 = 6; });
  rejects([](NetworkConfig& c) { c.fusion_stages = {5}; });
  rejects([](NetworkConfig& c) {
    c.pyramid_levels = 2;
    c.fusion_stages = {3};
  });
  rejects([](NetworkConfig& c) { c.head_levels = 1; });
  rejects([](NetworkConfig& c) { c.head_levels = 5; });
  rejects([](NetworkConfig& c) {
    c.n_stages = 7;
    c.keep_last3 = true;
    c.pyramid_levels = 7;
    c.fusion_stages = {6};
  });
  CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("default fusion builds one transform at level 2") {
  ParamStore store(3);
  Backbone b(store, small_config());
  CHECK(b.transform_count() == 1);
  CHECK(b.transform_for_stage(3).level() == 2);
  CHECK(store.contains("fusion.stage3.w_s.weight"));
  CHECK_FALSE(store.contains("ipg.level1.stem.weight"));
}

TEST_CASE("empty fusion set is the plain backbone") {
  NetworkConfig c = small_config();
  c.fusion_stages = {};
  ParamStore store(3);
  Backbone b(store, c);
  CHECK(b.transform_count() == 0);
  auto out = b.forward(build_pyramid(testing::random_tensor({1, 3, 64, 64}, 1), 4), Mode::Train);
  CHECK(out.pyramid_features.empty());
  for (std::size_t i = 0; i < out.stages.size(); ++i) {
    CHECK(testing::bitwise_equal(out.stages[i], out.raw[i]));
  }
}

TEST_CASE("FPN output dims and zero laterals") {
  NetworkConfig c = small_config();
  IpgNet net(c, 3);
  auto out = net.forward(testing::random_tensor({1, 3, 128, 128}, 2), Mode::Train);
  REQUIRE(out.fpn.size() == 4);
  const int dims[] = {32, 16, 8, 4};
  for (int i = 0; i < 4; ++i) {
    CHECK(out.fpn[i].shape() == Shape{1, 8, dims[i], dims[i]});
  }

  for (Conv& lateral : net.fpn().laterals()) {
    for (double& v : lateral.weight.mutable_values()) v = 0.0;
  }
  auto zeroed = net.forward(testing::random_tensor({1, 3, 128, 128}, 2), Mode::Train);
  for (const Tensor& p : zeroed.fpn) {
    for (double v : p.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("last_k_outputs") {
  std::vector<Tensor> outs;
  for (int s = 1; s <= 7; ++s) outs.emplace_back(Shape{1, 1, 1, 1}, static_cast<double>(s));
  auto last4 = last_k_outputs(outs, 4);
  REQUIRE(last4.size() == 4);
  CHECK(last4.front().item() == 4.0);
  CHECK(last4.back().item() == 7.0);
  CHECK(last_k_outputs(outs, 7).size() == 7);
  CHECK_THROWS_AS(last_k_outputs(outs, 8), ConfigError);
  CHECK_THROWS_AS(last_k_outputs(outs, 0), ConfigError);

  NetworkConfig c = small_config();
  c.fusion_stages = {};
  ParamStore store(1);
  Backbone b(store, c);
  auto out = b.forward(build_pyramid(testing::random_tensor({1, 3, 64, 64}, 1), 4), Mode::Train);
  auto deepest = last_k_outputs(out.stages, 1);
  CHECK(deepest[0].shape().h == 64 / 32);
}

TEST_CASE("parameter count grows with depth") {
  std::size_t previous = 0;
  for (int n = 4; n <= 7; ++n) {
    NetworkConfig c = small_config();
    c.n_stages = n;
    ParamStore store(1);
    Backbone b(store, c);
    const std::size_t count = store.count_values("backbone.");
    CHECK(count > previous);
    previous = count;
  }
}

TEST_CASE("fused features align with stage outputs across admitted configs") {
  int checked = 0;
  for (int n = 4; n <= 7; ++n) {
    for (bool keep : {false, true}) {
      for (int s = 1; s <= n; ++s) {
        NetworkConfig c = small_config();
        c.n_stages = n;
        c.keep_last3 = keep;
        c.pyramid_levels = n;
        c.fusion_stages = {s};
        c.head_levels = 2;
        try {
          c.validate();
        } catch (const ConfigError&) {
          continue;
        }
        const int m = c.required_multiple();
        for (auto [h, w] : {std::pair{m, m}, std::pair{2 * m, m}}) {
          CAPTURE(n);
          CAPTURE(keep);
          CAPTURE(s);
          CAPTURE(h);
          CAPTURE(w);
          ParamStore store(1);
          Backbone b(store, c);
          auto out = b.forward(build_pyramid(testing::random_tensor({1, 3, h, w}, 1), n),
                               Mode::Train);
          const Shape& f = out.pyramid_features.at(s).shape();
          const Shape& r = out.raw[s - 1].shape();
          CHECK(f.h == r.h);
          CHECK(f.w == r.w);
          CHECK(r.h * c.stage_stride(s) == h);
          ++checked;
        }
      }
    }
  }
  CHECK(checked >= 30);
}

TEST_CASE("sum fusion is the identity through the FPN at init") {
  NetworkConfig plain = small_config();
  plain.fusion_stages = {};
  NetworkConfig fused = small_config();
  fused.fusion_stages = {1, 2, 3, 4};
  IpgNet a(plain, 11);
  IpgNet b(fused, 11);
  Tensor x = testing::random_tensor({2, 3, 64, 64}, 4);
  auto pa = a.forward(x, Mode::Train).fpn;
  auto pb = b.forward(x, Mode::Train).fpn;
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(testing::bitwise_equal(pa[i], pb[i]));
}

TEST_CASE("indivisible input is rejected") {
  ParamStore store(1);
  Backbone b(store, small_config());
  Tensor x(Shape{1, 3, 48, 48}, 0.0);
  PyramidSet p{{x, x, x, x}};
  CHECK_THROWS_AS(b.forward(p, Mode::Train), PreconditionError);
}
