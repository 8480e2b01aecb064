#include "camalign/tensor.hpp"

#include <algorithm>
#include <string>

namespace camalign {

Tensor3::Tensor3(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ShapeError("negative tensor dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void Tensor3::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  require_same_shape(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + "x" + std::to_string(a.channels()) +
                     " does not match " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + "x" + std::to_string(b.channels()));
  }
}

}  // namespace camalign
