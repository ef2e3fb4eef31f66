#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ipg/tensor.hpp"

namespace ipg {

// |a - n| / max(|a|, |n|, floor). The floor keeps round-off in near-zero
// gradients from dominating; above it this is a plain relative error.
constexpr double kGradFloor = 1e-3;
double relative_error(double analytic, double numeric, double floor = kGradFloor);

struct GradCheckOptions {
  double eps = 1e-5;
  // Entries probed per tensor; <= 0 probes every entry.
  int max_entries = 0;
  std::uint64_t seed = 0;
};

// Probes whose +/- eps or +/- 2 eps evaluation flips a ReLU mask or pool argmax are
// skipped (and replaced by another entry when sampling).
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<index>]"
  int checked = 0;
  int skipped_kinks = 0;
};

struct GradTarget {
  std::string name;
  Tensor tensor;  // must require grad
};

// Five-point central differences of `loss_fn` against reverse-mode gradients for
// every target. `loss_fn` must rebuild the graph from the targets' current
// values on every call.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<GradTarget>& targets,
                                GradCheckOptions options = {});

// Dots `output` with a fixed pseudo-random weight tensor so that every output
// element receives a distinct upstream gradient.
Tensor random_projection(const Tensor& output, std::uint64_t seed);

}  // namespace ipg
