#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ipg {

// (batch, channels, height, width). Every dimension is >= 1.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor;

namespace detail {

struct TensorImpl;

// One recorded operation on the tape. `backward` reads the gradient of the
// op's output and accumulates into the gradients of `inputs`.
struct Node {
  std::vector<Tensor> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  std::span<double> grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

// Dense NCHW tensor of doubles with an optional tape node. Copies share
// storage; values are treated as immutable once an op has consumed them,
// parameter updates being the one exception.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const double> values() const;
  // Direct write access. Only for leaves (parameters, buffers, fresh inputs).
  std::span<double> mutable_values();

  double item() const;
  double at(int n, int c, int h, int w) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, no tape history.
  Tensor detach() const;
  Tensor clone() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::Node>& node() const;

  // Creates an op result. When any input requires grad, the result is
  // recorded on the tape with `backward`.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(const detail::TensorImpl&)> backward);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every tape tensor that requires grad.
void backward(const Tensor& loss);

// Records a fingerprint of piecewise-linear branch decisions (ReLU masks,
// max-pool argmax) while enabled. Finite-difference checks use it to detect
// perturbations that cross a kink.
class KinkTrace {
 public:
  KinkTrace();
  ~KinkTrace();
  KinkTrace(const KinkTrace&) = delete;
  KinkTrace& operator=(const KinkTrace&) = delete;

  std::uint64_t digest() const;

  static bool active();
  static void mix(std::uint64_t value);

 private:
  std::uint64_t* previous_;
  std::uint64_t state_;
};

}  // namespace ipg
