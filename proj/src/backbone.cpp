#include "ipg/backbone.hpp"

#include <algorithm>
#include <numeric>

#include "ipg/errors.hpp"

namespace ipg {

namespace {

constexpr int kBlocksPerStage = 2;
constexpr int kStemStride = 4;
constexpr int kKeptDilation = 2;

}  // namespace

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("network config: " + msg); };
  if (c1 < 4 || c1 % 4 != 0) fail("c1 must be a positive multiple of 4");
  if (n_stages < 4 || n_stages > 7) fail("n_stages must be in [4, 7]");
  if (keep_last3 && n_stages < 7) {
    fail("keep_last3 holds stages n-2..n at the stride of stage n-3, which must be >= 4; "
         "needs n_stages = 7");
  }
  if (pyramid_levels < 2) fail("pyramid_levels must be >= 2");
  if (fpn_channels < 1) fail("fpn_channels must be >= 1");
  if (n_classes < 1) fail("n_classes must be >= 1");
  if (image_channels < 1) fail("image_channels must be >= 1");
  if (head_levels < 0 || head_levels > n_stages) {
    fail("head_levels must be in [0, n_stages], got " + std::to_string(head_levels));
  }
  if (head_levels == 1) fail("the FPN needs at least 2 levels; head_levels = 1 is not allowed");
  for (int s : fusion_stages) {
    if (s < 1 || s > n_stages) fail("fusion stage " + std::to_string(s) + " outside 1..n_stages");
    if (s - 1 >= pyramid_levels) {
      fail("fusion stage " + std::to_string(s) + " needs pyramid level " + std::to_string(s - 1) +
           " but only " + std::to_string(pyramid_levels) + " levels are built");
    }
    if (kStemStride * (1 << (s - 1)) != stage_stride(s)) {
      fail("fusion stage " + std::to_string(s) + " has stride " + std::to_string(stage_stride(s)) +
           " but its pyramid feature has stride " + std::to_string(kStemStride * (1 << (s - 1))));
    }
  }
}

int NetworkConfig::stage_stride(int stage) const {
  if (stage < 1 || stage > n_stages) {
    throw ConfigError("stage " + std::to_string(stage) + " outside 1.." + std::to_string(n_stages));
  }
  if (keep_last3 && stage >= n_stages - 2) return stage_stride(n_stages - 3);
  return kStemStride << (stage - 1);
}

int NetworkConfig::stage_channels(int stage) const { return c1 << (std::min(stage, 4) - 1); }

int NetworkConfig::stage_dilation(int stage) const {
  return keep_last3 && stage >= n_stages - 2 ? kKeptDilation : 1;
}

int NetworkConfig::required_multiple() const {
  int multiple = stage_stride(n_stages);
  multiple = std::max(multiple, 1 << (pyramid_levels - 1));
  for (int s : fusion_stages) multiple = std::max(multiple, kStemStride << (s - 1));
  return multiple;
}

std::vector<int> NetworkConfig::head_strides() const {
  std::vector<int> strides;
  for (int s = n_stages - used_head_levels() + 1; s <= n_stages; ++s) {
    strides.push_back(stage_stride(s));
  }
  return strides;
}

namespace {

const NetworkConfig& validated(const NetworkConfig& config) {
  config.validate();
  return config;
}

}  // namespace

Backbone::Backbone(ParamStore& store, const NetworkConfig& config)
    : config_(validated(config)),
      stem_(Conv::make(store, "backbone.stem", config.image_channels, config.stem_width(), 7,
                       ConvOptions{2, 3, 1})),
      stem_bn_(BatchNorm::make(store, "backbone.stem_bn", config.stem_width())) {
  int c_in = config.stem_width();
  int prev_stride = kStemStride;
  for (int s = 1; s <= config.n_stages; ++s) {
    const int c_out = config.stage_channels(s);
    const int stride = config.stage_stride(s) / prev_stride;
    const int dilation = config.stage_dilation(s);
    Stage stage;
    for (int b = 0; b < kBlocksPerStage; ++b) {
      const std::string name = "backbone.stage" + std::to_string(s) + ".block" + std::to_string(b);
      stage.blocks.emplace_back(store, name, b == 0 ? c_in : c_out, std::max(1, c_out / 4), c_out,
                                b == 0 ? stride : 1, dilation, b == 0);
    }
    stages_.push_back(std::move(stage));
    c_in = c_out;
    prev_stride = config.stage_stride(s);
  }
  for (int s : config.fusion_stages) {
    const int level = s - 1;
    transforms_[s] = std::make_unique<IpgTransformLevel>(
        store, "ipg.level" + std::to_string(level), level, config.c1, config.image_channels);
    fusions_.emplace(s, Fusion(store, "fusion.stage" + std::to_string(s), config.fusion_variant,
                               transforms_[s]->out_channels(), config.stage_channels(s)));
  }
}

void Backbone::set_transform(int stage, std::unique_ptr<IpgTransformLevel> transform) {
  if (!transforms_.count(stage)) throw ConfigError("no fusion at stage " + std::to_string(stage));
  transforms_[stage] = std::move(transform);
}

BackboneOutput Backbone::forward(const PyramidSet& pyramid, Mode mode) {
  if (pyramid.size() < 1) throw ConfigError("empty pyramid");
  const Shape& in = pyramid[0].shape();
  const int multiple = config_.required_multiple();
  if (in.h % multiple != 0 || in.w % multiple != 0) {
    throw PreconditionError("backbone input " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                            " must be a multiple of " + std::to_string(multiple));
  }
  BackboneOutput out;
  Tensor x = max_pool2d(relu(stem_bn_(stem_(pyramid[0]), mode)), 3, 2, 1);
  for (int s = 1; s <= config_.n_stages; ++s) {
    for (Bottleneck& block : stages_[s - 1].blocks) x = block.forward(x, mode);
    out.raw.push_back(x);
    auto it = transforms_.find(s);
    if (it != transforms_.end()) {
      const int level = s - 1;
      if (level >= pyramid.size()) {
        throw ConfigError("fusion stage " + std::to_string(s) + " needs pyramid level " +
                          std::to_string(level) + ", pyramid has " +
                          std::to_string(pyramid.size()));
      }
      Tensor feature = it->second->forward(pyramid[level], mode);
      out.pyramid_features[s] = feature;
      x = fusions_.at(s).forward(feature, x);
    }
    out.stages.push_back(x);
  }
  return out;
}

BackboneOutput forward_backbone(Backbone& backbone, const PyramidSet& pyramid, Mode mode) {
  return backbone.forward(pyramid, mode);
}

std::vector<Tensor> last_k_outputs(const std::vector<Tensor>& stage_outputs, int k) {
  const int n = static_cast<int>(stage_outputs.size());
  if (k < 1 || k > n) {
    throw ConfigError("last_k_outputs: k=" + std::to_string(k) + " with " + std::to_string(n) +
                      " stage outputs");
  }
  return {stage_outputs.end() - k, stage_outputs.end()};
}

Fpn::Fpn(ParamStore& store, const std::string& name, const std::vector<int>& in_channels,
         int fpn_channels)
    : fpn_channels_(fpn_channels) {
  if (in_channels.size() < 2) throw ConfigError("FPN needs at least 2 input levels");
  for (std::size_t i = 0; i < in_channels.size(); ++i) {
    const std::string level = std::to_string(i);
    laterals_.push_back(Conv::make(store, name + ".lateral" + level, in_channels[i], fpn_channels,
                                   1, {}, true));
    smooth_.push_back(Conv::make(store, name + ".smooth" + level, fpn_channels, fpn_channels, 3,
                                 ConvOptions{1, 1, 1}, true));
  }
}

std::vector<Tensor> Fpn::forward(const std::vector<Tensor>& stage_outputs) const {
  if (stage_outputs.size() != laterals_.size()) {
    throw ShapeError("FPN built for " + std::to_string(laterals_.size()) + " levels, got " +
                     std::to_string(stage_outputs.size()));
  }
  const int n = static_cast<int>(stage_outputs.size());
  std::vector<Tensor> merged(n);
  merged[n - 1] = laterals_[n - 1](stage_outputs[n - 1]);
  for (int i = n - 2; i >= 0; --i) {
    const Shape& target = stage_outputs[i].shape();
    merged[i] = add(resize_bilinear(merged[i + 1], target.h, target.w),
                    laterals_[i](stage_outputs[i]));
  }
  std::vector<Tensor> p(n);
  for (int i = 0; i < n; ++i) p[i] = smooth_[i](merged[i]);
  return p;
}

}  // namespace ipg
