#include "ipg/layers.hpp"

namespace ipg {

Conv Conv::make(ParamStore& store, const std::string& name, int c_in, int c_out, int kernel,
                ConvOptions options, bool with_bias, Init weight_init, Init bias_init) {
  Conv conv;
  conv.weight = store.add(name + ".weight", Shape{c_out, c_in, kernel, kernel}, weight_init);
  if (with_bias) conv.bias = store.add(name + ".bias", Shape{1, c_out, 1, 1}, bias_init);
  conv.options = options;
  return conv;
}

BatchNorm BatchNorm::make(ParamStore& store, const std::string& name, int channels) {
  BatchNorm bn;
  Shape s{1, channels, 1, 1};
  bn.gamma = store.add(name + ".gamma", s, Init::constant(1.0));
  bn.beta = store.add(name + ".beta", s, Init::zeros());
  bn.stats.running_mean = store.add(name + ".running_mean", s, Init::zeros(), false);
  bn.stats.running_var = store.add(name + ".running_var", s, Init::constant(1.0), false);
  return bn;
}

LayerNorm LayerNorm::make(ParamStore& store, const std::string& name, int channels) {
  Shape s{1, channels, 1, 1};
  return {store.add(name + ".scale", s, Init::constant(1.0)),
          store.add(name + ".shift", s, Init::zeros())};
}

Bottleneck::Bottleneck(ParamStore& store, const std::string& name, int c_in, int c_mid,
                       int c_out, int stride, int dilation, bool projection)
    : reduce_(Conv::make(store, name + ".conv1", c_in, c_mid, 1)),
      conv_(Conv::make(store, name + ".conv2", c_mid, c_mid, 3,
                       ConvOptions{stride, dilation, dilation})),
      expand_(Conv::make(store, name + ".conv3", c_mid, c_out, 1)),
      bn1_(BatchNorm::make(store, name + ".bn1", c_mid)),
      bn2_(BatchNorm::make(store, name + ".bn2", c_mid)),
      bn3_(BatchNorm::make(store, name + ".bn3", c_out)) {
  if (projection || c_in != c_out || stride != 1) {
    proj_ = Conv::make(store, name + ".shortcut", c_in, c_out, 1, ConvOptions{stride, 0, 1});
    proj_bn_ = BatchNorm::make(store, name + ".shortcut_bn", c_out);
  }
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) {
  Tensor out = relu(bn1_(reduce_(x), mode));
  out = relu(bn2_(conv_(out), mode));
  out = bn3_(expand_(out), mode);
  Tensor shortcut = proj_ ? (*proj_bn_)((*proj_)(x), mode) : x;
  return relu(add(out, shortcut));
}

}  // namespace ipg
