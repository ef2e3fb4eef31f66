#include "ipg/pyramid.hpp"

#include "ipg/errors.hpp"
#include "ipg/ops.hpp"

namespace ipg {

PyramidSet build_pyramid(const Tensor& image, int n_levels) {
  if (n_levels < 2) {
    throw PreconditionError("image pyramid needs at least 2 levels, got " +
                            std::to_string(n_levels));
  }
  const Shape& s = image.shape();
  const int multiple = 1 << (n_levels - 1);
  if (s.h % multiple != 0 || s.w % multiple != 0) {
    throw PreconditionError("image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                            " must be a multiple of " + std::to_string(multiple) + " for a " +
                            std::to_string(n_levels) + "-level pyramid");
  }
  PyramidSet pyramid;
  pyramid.levels.push_back(image);
  for (int i = 1; i < n_levels; ++i) {
    pyramid.levels.push_back(resize_bilinear(image, s.h >> i, s.w >> i));
  }
  return pyramid;
}

}  // namespace ipg
