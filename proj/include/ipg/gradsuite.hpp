#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipg/gradcheck.hpp"

namespace ipg {

// Named finite-difference checks covering every differentiable operation,
// the composite modules and the full network (4 stages, C1 = 8, 32x32 input)
// under each fusion variant.
const std::vector<std::string>& gradient_case_names();

// Cases whose name starts with `prefix` ("" selects all).
std::vector<std::string> gradient_cases(const std::string& prefix);

// Throws UsageError for an unknown name.
GradCheckResult run_gradient_case(const std::string& name, std::uint64_t seed);

}  // namespace ipg
