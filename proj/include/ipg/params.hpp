#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ipg/tensor.hpp"

namespace ipg {

struct Parameter {
  std::string name;  // hierarchical dot path, unique per store
  Tensor tensor;
  bool trainable = true;
};

struct Init {
  enum class Kind {
    Zeros,
    Constant,
    Normal,         // N(0, value^2)
    KaimingNormal,  // fan-out, ReLU gain
    Identity,       // pointwise conv (C, C, 1, 1) -> identity map
    RightIdentity,  // pointwise conv (C, 2C, 1, 1) -> [0 | I]
  };
  Kind kind = Kind::Zeros;
  double value = 0.0;

  static Init zeros() { return {Kind::Zeros, 0.0}; }
  static Init constant(double v) { return {Kind::Constant, v}; }
  static Init normal(double stddev) { return {Kind::Normal, stddev}; }
  static Init kaiming() { return {Kind::KaimingNormal, 0.0}; }
  static Init identity() { return {Kind::Identity, 0.0}; }
  static Init right_identity() { return {Kind::RightIdentity, 0.0}; }
};

// Owns every parameter of a model. Each parameter's initial values come from
// a stream derived from (seed, name), so two models built from one seed share
// the values of every parameter they have in common.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  Tensor add(const std::string& name, Shape shape, Init init, bool trainable = true);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Parameter& get(const std::string& name) const;
  Tensor tensor(const std::string& name) const { return get(name).tensor; }

  // Name-ordered.
  const std::map<std::string, Parameter>& all() const { return params_; }
  std::vector<Parameter> trainable() const;

  std::size_t count_values(const std::string& prefix = "") const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Parameter> params_;
};

}  // namespace ipg
