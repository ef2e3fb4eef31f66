#include "ipg/params.hpp"

#include <cmath>

#include "ipg/errors.hpp"
#include "ipg/rng.hpp"

namespace ipg {

Tensor ParamStore::add(const std::string& name, Shape shape, Init init, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor t(shape, 0.0);
  auto v = t.mutable_values();
  Rng rng(derive_seed(seed_, name));
  switch (init.kind) {
    case Init::Kind::Zeros:
      break;
    case Init::Kind::Constant:
      std::fill(v.begin(), v.end(), init.value);
      break;
    case Init::Kind::Normal:
      for (double& x : v) x = normal(rng, 0.0, init.value);
      break;
    case Init::Kind::KaimingNormal: {
      double fan_out = static_cast<double>(shape.n) * shape.h * shape.w;
      double stddev = std::sqrt(2.0 / fan_out);
      for (double& x : v) x = normal(rng, 0.0, stddev);
      break;
    }
    case Init::Kind::Identity:
      if (shape.n != shape.c || shape.h != 1 || shape.w != 1) {
        throw ShapeError("identity init needs (C,C,1,1), got " + shape.str());
      }
      for (int i = 0; i < shape.n; ++i) v[static_cast<std::size_t>(i) * shape.c + i] = 1.0;
      break;
    case Init::Kind::RightIdentity:
      if (shape.c != 2 * shape.n || shape.h != 1 || shape.w != 1) {
        throw ShapeError("[0|I] init needs (C,2C,1,1), got " + shape.str());
      }
      for (int i = 0; i < shape.n; ++i) {
        v[static_cast<std::size_t>(i) * shape.c + shape.n + i] = 1.0;
      }
      break;
  }
  t.set_requires_grad(trainable);
  params_.emplace(name, Parameter{name, t, trainable});
  return t;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<Parameter> ParamStore::trainable() const {
  std::vector<Parameter> out;
  for (const auto& [name, p] : params_) {
    if (p.trainable) out.push_back(p);
  }
  return out;
}

std::size_t ParamStore::count_values(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& [name, p] : params_) {
    if (p.trainable && name.rfind(prefix, 0) == 0) total += p.tensor.numel();
  }
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace ipg
