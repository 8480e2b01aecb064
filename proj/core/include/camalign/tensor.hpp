#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "camalign/error.hpp"

namespace camalign {

/// Dense height x width x channels tensor stored channel-fastest (HWC).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double operator()(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Channel vector of pixel p = y * width + x.
  std::span<double> pixel(int p) {
    return {data_.data() + static_cast<std::size_t>(p) * channels_,
            static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int p) const {
    return {data_.data() + static_cast<std::size_t>(p) * channels_,
            static_cast<std::size_t>(channels_)};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor3& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  void fill(double v);
  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator*=(double s);

  bool operator==(const Tensor3& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// An RGB frame with values in [0, 1].
using Image = Tensor3;

/// Spatial embedding produced by the feature extractor.
using FeatureMap = Tensor3;

/// Spatially pooled embedding.
using Embedding = std::vector<double>;

/// Throws ShapeError with `what` when the two tensors differ in shape.
void require_same_shape(const Tensor3& a, const Tensor3& b, const char* what);

}  // namespace camalign
