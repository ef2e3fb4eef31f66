#pragma once

#include <vector>

#include "ipg/tensor.hpp"

namespace ipg {

// Image pyramid {I_0 .. I_{N-1}}; level i is the input resized to
// (H / 2^i, W / 2^i). Level 0 is the input itself.
struct PyramidSet {
  std::vector<Tensor> levels;

  int size() const { return static_cast<int>(levels.size()); }
  const Tensor& operator[](int i) const { return levels.at(i); }
};

// Throws PreconditionError when n_levels < 2 or when H / W are not multiples
// of 2^(n_levels - 1).
PyramidSet build_pyramid(const Tensor& image, int n_levels);

}  // namespace ipg
