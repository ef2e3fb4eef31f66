#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipg/detector.hpp"
#include "ipg/tensor.hpp"

namespace ipg {

enum class ShapeClass { Square = 0, Disc = 1, Cross = 2 };
constexpr int kSynthClasses = 3;
constexpr int kSynthImageSize = 128;
constexpr double kMinSide = 4.0;
constexpr double kMaxSide = 24.0;
constexpr double kSmallSide = 12.0;
constexpr int kMaxObjects = 6;

std::string to_string(ShapeClass c);

struct SynthScene {
  Tensor image;  // (1, 3, S, S), raw intensities in [0, 1]
  std::vector<GroundTruth> boxes;
  std::uint64_t seed = 0;
};

// Smoothed-noise background with 1..6 anti-aliased shapes; every value is a
// function of `seed` alone.
SynthScene generate_scene(std::uint64_t seed, int size = kSynthImageSize);

// Coverage raster of a single shape (1, 1, S, S); the renderer for scenes.
Tensor render_coverage(ShapeClass cls, const Box& box, int size);

// Scene i of a split uses seed base_seed + i.
struct DatasetSplit {
  std::string name;
  int size = 0;
  std::uint64_t base_seed = 0;

  std::uint64_t seed(int i) const { return base_seed + static_cast<std::uint64_t>(i); }
  SynthScene scene(int i) const;
};

DatasetSplit generate_split(const std::string& name, int size, std::uint64_t base_seed);

// Throws ConfigError when any two splits share a seed.
void require_disjoint(const std::vector<DatasetSplit>& splits);

// Per-channel mean/std normalization applied before the pyramid is built.
constexpr double kPixelMean = 0.45;
constexpr double kPixelStd = 0.25;
Tensor normalize_image(const Tensor& raw);

// Normalized (B, 3, S, S) batch from scenes.
Tensor stack_images(const std::vector<SynthScene>& scenes);

// Zero-pads (bottom / right) so H and W become multiples of `multiple`.
Tensor pad_to_multiple(const Tensor& image, int multiple);

// Portable float map (RGB, little-endian) plus a boxes file in the
// detection-dump format with score 1.
void export_scene(const SynthScene& scene, const std::string& pfm_path,
                  const std::string& boxes_path, int image_id);

}  // namespace ipg
