#include "ipg/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ipg/errors.hpp"
#include "ipg/rng.hpp"

namespace ipg {

namespace {

constexpr int kSuperSample = 4;
constexpr int kBlurRadius = 2;
constexpr double kPlacementGap = 2.0;

struct ClassStyle {
  double intensity;
  std::array<double, 3> tint;
};

constexpr std::array<ClassStyle, kSynthClasses> kStyles = {{
    {0.95, {1.0, 0.8, 0.8}},  // square: bright, warm
    {0.75, {0.8, 1.0, 0.8}},  // disc: mid, green
    {0.08, {1.0, 1.0, 1.0}},  // cross: dark
}};

bool inside(ShapeClass cls, const Box& box, double x, double y) {
  const double cx = (box.x_min + box.x_max) / 2;
  const double cy = (box.y_min + box.y_max) / 2;
  const double half = box.width() / 2;
  switch (cls) {
    case ShapeClass::Square:
      return x >= box.x_min && x <= box.x_max && y >= box.y_min && y <= box.y_max;
    case ShapeClass::Disc:
      return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= half * half;
    case ShapeClass::Cross: {
      const double arm = half / 3;
      bool horizontal = std::abs(y - cy) <= arm && x >= box.x_min && x <= box.x_max;
      bool vertical = std::abs(x - cx) <= arm && y >= box.y_min && y <= box.y_max;
      return horizontal || vertical;
    }
  }
  return false;
}

// Writes the anti-aliased coverage of `cls` into the S x S `coverage` plane.
void rasterize(ShapeClass cls, const Box& box, int size, std::vector<double>& coverage) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(box.x_max)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(box.y_max)));
  const double step = 1.0 / kSuperSample;
  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSuperSample; ++sy) {
        for (int sx = 0; sx < kSuperSample; ++sx) {
          hits += inside(cls, box, px + (sx + 0.5) * step, py + (sy + 0.5) * step) ? 1 : 0;
        }
      }
      coverage[static_cast<std::size_t>(py) * size + px] =
          static_cast<double>(hits) / (kSuperSample * kSuperSample);
    }
  }
}

bool overlaps(const Box& a, const std::vector<GroundTruth>& placed) {
  for (const GroundTruth& g : placed) {
    const Box& b = g.box;
    if (a.x_min < b.x_max + kPlacementGap && b.x_min < a.x_max + kPlacementGap &&
        a.y_min < b.y_max + kPlacementGap && b.y_min < a.y_max + kPlacementGap) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::Square:
      return "square";
    case ShapeClass::Disc:
      return "disc";
    case ShapeClass::Cross:
      return "cross";
  }
  return "?";
}

Tensor render_coverage(ShapeClass cls, const Box& box, int size) {
  std::vector<double> coverage(static_cast<std::size_t>(size) * size, 0.0);
  rasterize(cls, box, size, coverage);
  return Tensor(Shape{1, 1, size, size}, std::move(coverage));
}

SynthScene generate_scene(std::uint64_t seed, int size) {
  if (size < 2 * static_cast<int>(kMaxSide)) throw PreconditionError("scene size too small");
  Rng rng(derive_seed(seed, "scene"));
  const std::size_t plane = static_cast<std::size_t>(size) * size;

  // Background: box-blurred uniform noise per channel.
  std::vector<double> pixels(3 * plane);
  std::vector<double> noise(plane), tmp(plane);
  for (int c = 0; c < 3; ++c) {
    for (double& v : noise) v = uniform(rng, 0.0, 1.0);
    for (int pass = 0; pass < 2; ++pass) {
      const std::vector<double>& src = pass == 0 ? noise : tmp;
      std::vector<double>& dst = pass == 0 ? tmp : noise;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          double acc = 0.0;
          int cnt = 0;
          for (int d = -kBlurRadius; d <= kBlurRadius; ++d) {
            int xx = pass == 0 ? x + d : x;
            int yy = pass == 0 ? y : y + d;
            if (xx < 0 || yy < 0 || xx >= size || yy >= size) continue;
            acc += src[static_cast<std::size_t>(yy) * size + xx];
            ++cnt;
          }
          dst[static_cast<std::size_t>(y) * size + x] = acc / cnt;
        }
      }
    }
    for (std::size_t i = 0; i < plane; ++i) pixels[c * plane + i] = 0.3 + 0.3 * noise[i];
  }

  SynthScene scene;
  scene.seed = seed;
  const int count = std::uniform_int_distribution<int>(1, kMaxObjects)(rng);
  std::vector<double> coverage(plane);
  for (int k = 0; k < count; ++k) {
    const auto cls = static_cast<ShapeClass>(std::uniform_int_distribution<int>(0, 2)(rng));
    const bool small = uniform(rng, 0.0, 1.0) < 0.5;
    const double side = small ? uniform(rng, kMinSide, kSmallSide) : uniform(rng, kSmallSide, kMaxSide);
    const double jitter = uniform(rng, -0.05, 0.05);
    Box box;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      const double cx = uniform(rng, side / 2, size - side / 2);
      const double cy = uniform(rng, side / 2, size - side / 2);
      box = {cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2};
      placed = !overlaps(box, scene.boxes);
    }
    if (!placed) continue;
    std::fill(coverage.begin(), coverage.end(), 0.0);
    rasterize(cls, box, size, coverage);
    const ClassStyle& style = kStyles[static_cast<int>(cls)];
    for (int c = 0; c < 3; ++c) {
      const double value = std::clamp(style.intensity * style.tint[c] + jitter, 0.0, 1.0);
      for (std::size_t i = 0; i < plane; ++i) {
        double& px = pixels[c * plane + i];
        px += coverage[i] * (value - px);
      }
    }
    scene.boxes.push_back({box, static_cast<int>(cls)});
  }
  scene.image = Tensor(Shape{1, 3, size, size}, std::move(pixels));
  return scene;
}

SynthScene DatasetSplit::scene(int i) const {
  if (i < 0 || i >= size) throw PreconditionError("scene index out of range in split " + name);
  return generate_scene(seed(i));
}

DatasetSplit generate_split(const std::string& name, int size, std::uint64_t base_seed) {
  if (size < 1) throw ConfigError("split '" + name + "' must contain at least one scene");
  return DatasetSplit{name, size, base_seed};
}

void require_disjoint(const std::vector<DatasetSplit>& splits) {
  for (std::size_t i = 0; i < splits.size(); ++i) {
    for (std::size_t j = i + 1; j < splits.size(); ++j) {
      const auto& a = splits[i];
      const auto& b = splits[j];
      const std::uint64_t a_end = a.base_seed + static_cast<std::uint64_t>(a.size);
      const std::uint64_t b_end = b.base_seed + static_cast<std::uint64_t>(b.size);
      if (a.base_seed < b_end && b.base_seed < a_end) {
        throw ConfigError("splits '" + a.name + "' and '" + b.name + "' share seeds");
      }
    }
  }
}

Tensor normalize_image(const Tensor& raw) {
  std::vector<double> v(raw.values().begin(), raw.values().end());
  for (double& x : v) x = (x - kPixelMean) / kPixelStd;
  return Tensor(raw.shape(), std::move(v));
}

Tensor stack_images(const std::vector<SynthScene>& scenes) {
  if (scenes.empty()) throw PreconditionError("stack_images: empty batch");
  Shape s = scenes[0].image.shape();
  const std::size_t item = s.numel();
  std::vector<double> v;
  v.reserve(item * scenes.size());
  for (const SynthScene& sc : scenes) {
    if (sc.image.shape() != s) throw ShapeError("stack_images: mixed image sizes");
    for (double x : sc.image.values()) v.push_back((x - kPixelMean) / kPixelStd);
  }
  s.n = static_cast<int>(scenes.size());
  return Tensor(s, std::move(v));
}

Tensor pad_to_multiple(const Tensor& image, int multiple) {
  const Shape& s = image.shape();
  const int h = (s.h + multiple - 1) / multiple * multiple;
  const int w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return image;
  Tensor out(Shape{s.n, s.c, h, w}, 0.0);
  auto dst = out.mutable_values();
  const auto src = image.values();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        std::copy_n(src.begin() + ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w, s.w,
                    dst.begin() + ((static_cast<std::size_t>(n) * s.c + c) * h + y) * w);
      }
    }
  }
  return out;
}

void export_scene(const SynthScene& scene, const std::string& pfm_path,
                  const std::string& boxes_path, int image_id) {
  const Shape& s = scene.image.shape();
  std::ofstream pfm(pfm_path, std::ios::binary);
  if (!pfm) throw PreconditionError("cannot write " + pfm_path);
  pfm << "PF\n" << s.w << ' ' << s.h << "\n-1.0\n";
  const auto v = scene.image.values();
  for (int y = s.h - 1; y >= 0; --y) {  // PFM stores rows bottom-up
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float f = static_cast<float>(v[(static_cast<std::size_t>(c) * s.h + y) * s.w + x]);
        unsigned char bytes[4];
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
        pfm.write(reinterpret_cast<const char*>(bytes), 4);
      }
    }
  }
  std::ofstream boxes(boxes_path);
  if (!boxes) throw PreconditionError("cannot write " + boxes_path);
  std::vector<DetectionBox> dets;
  for (const GroundTruth& g : scene.boxes) dets.push_back({g.box, g.class_idx, 1.0});
  write_detections(boxes, image_id, dets);
}

}  // namespace ipg
