#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "camalign/rng.hpp"
#include "camalign/tensor.hpp"

namespace camalign {

/// A trainable parameter block with its accumulated gradient.
struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, std::size_t count)
      : name(std::move(n)), value(count, 0.0), grad(count, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// 64-byte aligned storage so vectorized products see the same alignment on
/// every call and round identically.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Intermediate values kept by Conv2d::forward for the backward pass.
struct ConvCache {
  int in_height = 0;
  int in_width = 0;
  AlignedBuffer columns;  // (out_h*out_w) x (9*in_channels), row-major
};

/// 3x3 convolution with zero padding 1 and configurable stride, HWC layout.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int stride, const std::string& name);

  void init_he(Rng& rng);

  /// Pass a null cache for inference.
  Tensor3 forward(const Tensor3& input, ConvCache* cache) const;

  /// Accumulates weight/bias gradients and returns dLoss/dInput when requested.
  Tensor3 backward(const Tensor3& grad_output, const ConvCache& cache, bool want_input_grad);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int stride() const { return stride_; }
  static int output_extent(int extent, int stride) { return (extent - 1) / stride + 1; }

  /// Weight layout: out_channels rows of 9*in_channels entries ordered (ky, kx, c_in).
  Param weight;
  Param bias;

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  int stride_ = 1;
};

/// In-place leaky rectifier; slope 0 gives the plain rectifier.
void leaky_relu(Tensor3& t, double slope);
/// Multiplies grad by the activation derivative, read off the activation output.
void leaky_relu_backward(Tensor3& grad, const Tensor3& output, double slope);

/// log(sum(exp(z))). Terms are summed in sorted order so the result does not
/// depend on the order of the classes.
double log_sum_exp(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 penalty added to the gradient
};

/// Adaptive-moment optimizer over a fixed list of parameter blocks.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamOptions options);
  void step(double learning_rate);
  long steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace camalign
