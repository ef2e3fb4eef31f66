#include "ipg/gradsuite.hpp"

#include <functional>
#include <map>

#include "ipg/backbone.hpp"
#include "ipg/errors.hpp"
#include "ipg/fusion.hpp"
#include "ipg/ipg_transform.hpp"
#include "ipg/network.hpp"
#include "ipg/ops.hpp"
#include "ipg/rng.hpp"

namespace ipg {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = uniform(rng, lo, hi);
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Gives zero-initialized and identity-initialized parameters generic values
// so that every path through the graph carries gradient.
void jitter_parameters(ParamStore& store, Rng& rng) {
  for (const auto& [name, p] : store.all()) {
    if (!p.trainable) continue;
    Tensor t = p.tensor;
    for (double& x : t.mutable_values()) x += normal(rng, 0.0, 0.1);
  }
}

std::vector<GradTarget> store_targets(const ParamStore& store) {
  std::vector<GradTarget> targets;
  for (const auto& [name, p] : store.all()) {
    if (p.trainable) targets.push_back({name, p.tensor});
  }
  return targets;
}

using Case = std::function<GradCheckResult(std::uint64_t)>;

GradCheckResult unary(std::uint64_t seed, Shape shape,
                      const std::function<Tensor(const Tensor&)>& op) {
  Rng rng(derive_seed(seed, "input"));
  Tensor x = random_tensor(shape, rng);
  return check_gradients([&] { return random_projection(op(x), seed); }, {{"x", x}},
                         {1e-5, 0, seed});
}

GradCheckResult binary(std::uint64_t seed, Shape a_shape, Shape b_shape,
                       const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
  Rng rng(derive_seed(seed, "input"));
  Tensor a = random_tensor(a_shape, rng);
  Tensor b = random_tensor(b_shape, rng);
  return check_gradients([&] { return random_projection(op(a, b), seed); }, {{"a", a}, {"b", b}},
                         {1e-5, 0, seed});
}

GradCheckResult conv_case(std::uint64_t seed, ConvOptions opts, bool bias) {
  Rng rng(derive_seed(seed, "input"));
  Tensor x = random_tensor({2, 3, 7, 6}, rng);
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor b = bias ? random_tensor({1, 4, 1, 1}, rng) : Tensor();
  std::vector<GradTarget> targets = {{"x", x}, {"w", w}};
  if (bias) targets.push_back({"b", b});
  return check_gradients([&] { return random_projection(conv2d(x, w, b, opts), seed); }, targets,
                         {1e-5, 0, seed});
}

GradCheckResult batch_norm_case(std::uint64_t seed, Mode mode) {
  Rng rng(derive_seed(seed, "input"));
  Tensor x = random_tensor({3, 4, 3, 2}, rng);
  Tensor gamma = random_tensor({1, 4, 1, 1}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({1, 4, 1, 1}, rng);
  BatchNormStats stats{Tensor({1, 4, 1, 1}, 0.1), Tensor({1, 4, 1, 1}, 0.7)};
  return check_gradients(
      [&] {
        BatchNormStats scratch{stats.running_mean.clone(), stats.running_var.clone()};
        return random_projection(batch_norm(x, gamma, beta, scratch, mode), seed);
      },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}}, {1e-5, 0, seed});
}

GradCheckResult fusion_case(std::uint64_t seed, FusionKind kind) {
  ParamStore store(seed);
  Fusion fusion(store, "fusion", kind, 6, 8);
  Rng rng(derive_seed(seed, "input"));
  jitter_parameters(store, rng);
  Tensor f = random_tensor({2, 6, 3, 3}, rng);
  Tensor r = random_tensor({2, 8, 3, 3}, rng);
  std::vector<GradTarget> targets = store_targets(store);
  targets.push_back({"F", f});
  targets.push_back({"R", r});
  return check_gradients([&] { return random_projection(fusion.forward(f, r), seed); }, targets,
                         {1e-5, 0, seed});
}

GradCheckResult bottleneck_case(std::uint64_t seed) {
  ParamStore store(seed);
  Bottleneck block(store, "block", 4, 2, 8, 2, 1, true);
  Rng rng(derive_seed(seed, "input"));
  jitter_parameters(store, rng);
  Tensor x = random_tensor({2, 4, 6, 6}, rng);
  std::vector<GradTarget> targets = store_targets(store);
  targets.push_back({"x", x});
  return check_gradients(
      [&] { return random_projection(block.forward(x, Mode::Train), seed); }, targets,
      {1e-5, 4, seed});
}

GradCheckResult transform_case(std::uint64_t seed) {
  ParamStore store(seed);
  IpgTransformLevel level(store, "ipg.level1", 1, 8, 3);
  Rng rng(derive_seed(seed, "input"));
  jitter_parameters(store, rng);
  Tensor x = random_tensor({2, 3, 16, 16}, rng);
  std::vector<GradTarget> targets = store_targets(store);
  targets.push_back({"image", x});
  return check_gradients(
      [&] { return random_projection(level.forward(x, Mode::Train), seed); }, targets,
      {1e-5, 4, seed});
}

GradCheckResult loss_case(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "input"));
  const std::vector<int> strides = {4, 8};
  DetectionHead::Output out;
  out.cls = {random_tensor({2, 3, 4, 4}, rng, -3, 1), random_tensor({2, 3, 2, 2}, rng, -3, 1)};
  out.box = {random_tensor({2, 4, 4, 4}, rng), random_tensor({2, 4, 2, 2}, rng)};
  const std::vector<Anchor> anchors = make_anchors(level_geometry(out, strides));
  std::vector<AnchorTargets> targets;
  for (int b = 0; b < 2; ++b) {
    std::vector<GroundTruth> gts;
    for (int k = 0; k < 3; ++k) {
      const double cx = uniform(rng, 2, 14), cy = uniform(rng, 2, 14), s = uniform(rng, 4, 20);
      gts.push_back({{cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2}, k % 3});
    }
    targets.push_back(assign_targets(anchors, gts));
  }
  std::vector<GradTarget> grads;
  for (std::size_t i = 0; i < 2; ++i) {
    grads.push_back({"cls" + std::to_string(i), out.cls[i]});
    grads.push_back({"box" + std::to_string(i), out.box[i]});
  }
  return check_gradients([&] { return detection_loss(out, targets).total; }, grads,
                         {1e-5, 0, seed});
}

GradCheckResult network_case(std::uint64_t seed, FusionKind kind) {
  NetworkConfig cfg;
  cfg.c1 = 8;
  cfg.n_stages = 4;
  cfg.fusion_variant = kind;
  cfg.fusion_stages = {1, 2, 3, 4};
  cfg.fpn_channels = 8;
  IpgNet net(cfg, seed);
  Rng rng(derive_seed(seed, "input"));
  jitter_parameters(net.params(), rng);
  Tensor images = random_tensor({1, 3, 32, 32}, rng);
  std::vector<std::vector<GroundTruth>> truth(1);
  for (auto& gts : truth) {
    for (int k = 0; k < 2; ++k) {
      const double cx = uniform(rng, 6, 26), cy = uniform(rng, 6, 26), s = uniform(rng, 4, 16);
      gts.push_back({{cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2}, k});
    }
  }
  std::vector<GradTarget> targets = store_targets(net.params());
  targets.push_back({"image", images});
  return check_gradients(
      [&] {
        IpgNet::Output out = net.forward(images, Mode::Train);
        const std::vector<Anchor> anchors = net.anchors(out);
        std::vector<AnchorTargets> at;
        for (const auto& gts : truth) at.push_back(assign_targets(anchors, gts));
        return detection_loss(out.head, at).total;
      },
      targets, {1e-5, 2, seed});
}

const std::map<std::string, Case>& registry() {
  static const std::map<std::string, Case> cases = {
      {"op.conv2d", [](std::uint64_t s) { return conv_case(s, {}, true); }},
      {"op.conv2d_strided", [](std::uint64_t s) { return conv_case(s, {2, 1, 1}, false); }},
      {"op.conv2d_dilated", [](std::uint64_t s) { return conv_case(s, {1, 2, 2}, true); }},
      {"op.max_pool2d",
       [](std::uint64_t s) {
         return unary(s, {2, 2, 7, 7}, [](const Tensor& x) { return max_pool2d(x, 3, 2, 1); });
       }},
      {"op.maxpool2", [](std::uint64_t s) { return unary(s, {2, 2, 6, 4}, maxpool2); }},
      {"op.relu", [](std::uint64_t s) { return unary(s, {2, 3, 4, 4}, relu); }},
      {"op.add", [](std::uint64_t s) { return binary(s, {2, 3, 4, 4}, {2, 3, 4, 4}, add); }},
      {"op.mul", [](std::uint64_t s) { return binary(s, {2, 3, 4, 4}, {2, 3, 4, 4}, mul); }},
      {"op.scale",
       [](std::uint64_t s) {
         return unary(s, {2, 3, 4, 4}, [](const Tensor& x) { return scale(x, -1.7); });
       }},
      {"op.concat_channels",
       [](std::uint64_t s) { return binary(s, {2, 3, 4, 4}, {2, 5, 4, 4}, concat_channels); }},
      {"op.slice_channels",
       [](std::uint64_t s) {
         return unary(s, {2, 6, 3, 3}, [](const Tensor& x) { return slice_channels(x, 2, 3); });
       }},
      {"op.sum",
       [](std::uint64_t s) {
         return unary(s, {2, 3, 4, 4}, [](const Tensor& x) { return scale(sum(x), 0.3); });
       }},
      {"op.mean",
       [](std::uint64_t s) {
         return unary(s, {2, 3, 4, 4}, [](const Tensor& x) { return scale(mean(x), 0.3); });
       }},
      {"op.batch_norm_train", [](std::uint64_t s) { return batch_norm_case(s, Mode::Train); }},
      {"op.batch_norm_eval", [](std::uint64_t s) { return batch_norm_case(s, Mode::Eval); }},
      {"op.layer_norm",
       [](std::uint64_t s) {
         Rng rng(derive_seed(s, "input"));
         Tensor x = random_tensor({2, 5, 3, 3}, rng);
         Tensor g = random_tensor({1, 5, 1, 1}, rng, 0.5, 1.5);
         Tensor b = random_tensor({1, 5, 1, 1}, rng);
         return check_gradients([&] { return random_projection(layer_norm(x, g, b), s); },
                                {{"x", x}, {"scale", g}, {"shift", b}}, {1e-5, 0, s});
       }},
      {"op.resize_bilinear_up",
       [](std::uint64_t s) {
         return unary(s, {2, 2, 3, 4}, [](const Tensor& x) { return resize_bilinear(x, 6, 9); });
       }},
      {"op.resize_bilinear_down",
       [](std::uint64_t s) {
         return unary(s, {2, 2, 8, 7}, [](const Tensor& x) { return resize_bilinear(x, 3, 4); });
       }},
      {"op.channel_interp_up",
       [](std::uint64_t s) {
         return unary(s, {2, 3, 2, 2}, [](const Tensor& x) { return channel_interp(x, 8); });
       }},
      {"op.channel_interp_down",
       [](std::uint64_t s) {
         return unary(s, {2, 9, 2, 2}, [](const Tensor& x) { return channel_interp(x, 4); });
       }},
      {"module.bottleneck", bottleneck_case},
      {"module.ipg_transform", transform_case},
      {"module.fusion_sum", [](std::uint64_t s) { return fusion_case(s, FusionKind::Sum); }},
      {"module.fusion_product",
       [](std::uint64_t s) { return fusion_case(s, FusionKind::ResidualProduct); }},
      {"module.fusion_concat",
       [](std::uint64_t s) { return fusion_case(s, FusionKind::Concatenation); }},
      {"module.detection_loss", loss_case},
      {"net.sum", [](std::uint64_t s) { return network_case(s, FusionKind::Sum); }},
      {"net.product", [](std::uint64_t s) { return network_case(s, FusionKind::ResidualProduct); }},
      {"net.concat", [](std::uint64_t s) { return network_case(s, FusionKind::Concatenation); }},
  };
  return cases;
}

}  // namespace

const std::vector<std::string>& gradient_case_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<std::string> gradient_cases(const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& name : gradient_case_names()) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  if (out.empty()) {
    throw UsageError("no gradient check matches '" + prefix + "'; try op, module or net");
  }
  return out;
}

GradCheckResult run_gradient_case(const std::string& name, std::uint64_t seed) {
  auto it = registry().find(name);
  if (it == registry().end()) throw UsageError("unknown gradient check '" + name + "'");
  return it->second(seed);
}

}  // namespace ipg
