#include "ipg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipg/errors.hpp"
#include "ipg/ops.hpp"
#include "ipg/rng.hpp"

namespace ipg {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Tensor random_projection(const Tensor& output, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "projection"));
  std::vector<double> w(output.numel());
  for (double& x : w) x = uniform(rng, -1.0, 1.0);
  return sum(mul(output, Tensor(output.shape(), std::move(w))));
}

namespace {

struct Probe {
  double value = 0.0;
  std::uint64_t digest = 0;
};

Probe evaluate(const std::function<Tensor()>& loss_fn) {
  KinkTrace trace;
  Tensor loss = loss_fn();
  return {loss.item(), trace.digest()};
}

}  // namespace

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<GradTarget>& targets, GradCheckOptions options) {
  for (const GradTarget& t : targets) {
    if (!t.tensor.requires_grad()) {
      throw ContractError("gradcheck target '" + t.name + "' does not require grad");
    }
    Tensor copy = t.tensor;
    copy.zero_grad();
  }

  std::uint64_t base_digest = 0;
  {
    KinkTrace trace;
    Tensor loss = loss_fn();
    base_digest = trace.digest();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const GradTarget& t : targets) {
    if (t.tensor.has_grad()) {
      analytic.emplace_back(t.tensor.grad().begin(), t.tensor.grad().end());
    } else {
      analytic.emplace_back(t.tensor.numel(), 0.0);
    }
  }

  GradCheckResult result;
  Rng rng(derive_seed(options.seed, "gradcheck"));
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor tensor = targets[ti].tensor;
    const std::size_t n = tensor.numel();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const bool sampled = options.max_entries > 0 && static_cast<std::size_t>(options.max_entries) < n;
    if (sampled) std::shuffle(order.begin(), order.end(), rng);
    const std::size_t wanted = sampled ? static_cast<std::size_t>(options.max_entries) : n;

    std::size_t done = 0;
    for (std::size_t k = 0; k < n && done < wanted; ++k) {
      const std::size_t i = order[k];
      auto values = tensor.mutable_values();
      const double original = values[i];
      Probe probes[4];
      const double offsets[4] = {options.eps, -options.eps, 2 * options.eps, -2 * options.eps};
      bool crossed = false;
      for (int p = 0; p < 4; ++p) {
        values[i] = original + offsets[p];
        probes[p] = evaluate(loss_fn);
        crossed = crossed || probes[p].digest != base_digest;
      }
      values[i] = original;
      if (crossed) {
        // Sampled mode moves on to the next shuffled entry instead.
        ++result.skipped_kinks;
        continue;
      }
      // Five-point stencil, fourth-order accurate.
      const double numeric = (8.0 * (probes[0].value - probes[1].value) -
                              (probes[2].value - probes[3].value)) /
                             (12.0 * options.eps);
      const double err = relative_error(analytic[ti][i], numeric);
      if (result.worst.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = targets[ti].name + "[" + std::to_string(i) + "]";
      }
      ++result.checked;
      ++done;
    }
  }
  return result;
}

}  // namespace ipg
