#include "camalign/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace camalign {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

}  // namespace

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Conv2d::Conv2d(int in_channels, int out_channels, int stride, const std::string& name)
    : weight(name + ".weight", static_cast<std::size_t>(out_channels) * 9 * in_channels),
      bias(name + ".bias", static_cast<std::size_t>(out_channels)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      stride_(stride) {
  if (in_channels < 1 || out_channels < 1 || stride < 1) {
    throw ShapeError("invalid convolution geometry for " + name);
  }
}

void Conv2d::init_he(Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (9.0 * in_channels_));
  for (double& w : weight.value) w = rng.normal() * std_dev;
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
}

Tensor3 Conv2d::forward(const Tensor3& input, ConvCache* cache) const {
  if (input.channels() != in_channels_) {
    throw ShapeError("convolution expects " + std::to_string(in_channels_) +
                     " input channels, got " + std::to_string(input.channels()));
  }
  const int h = input.height();
  const int w = input.width();
  const int oh = output_extent(h, stride_);
  const int ow = output_extent(w, stride_);
  const int k = 9 * in_channels_;

  AlignedBuffer local;
  AlignedBuffer& cols = cache ? cache->columns : local;
  cols.assign(static_cast<std::size_t>(oh) * ow * k, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = cols.data() + (static_cast<std::size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_ + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_ + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const auto src = input.pixel(iy * w + ix);
          std::copy(src.begin(), src.end(), row + (ky * 3 + kx) * in_channels_);
        }
      }
    }
  }
  if (cache) {
    cache->in_height = h;
    cache->in_width = w;
  }

  // Products run on aligned copies; bias and accumulation stay scalar.
  const RowMatrix w_m = ConstRowMap(weight.value.data(), out_channels_, k);
  const RowMatrix out_m = ConstRowMap(cols.data(), static_cast<Eigen::Index>(oh) * ow, k) * w_m.transpose();
  Tensor3 out(oh, ow, out_channels_);
  double* dst = out.data();
  for (Eigen::Index r = 0; r < out_m.rows(); ++r) {
    for (int o = 0; o < out_channels_; ++o) *dst++ = out_m(r, o) + bias.value[o];
  }
  return out;
}

Tensor3 Conv2d::backward(const Tensor3& grad_output, const ConvCache& cache,
                         bool want_input_grad) {
  const int oh = grad_output.height();
  const int ow = grad_output.width();
  const int k = 9 * in_channels_;
  const Eigen::Index rows = static_cast<Eigen::Index>(oh) * ow;
  const RowMatrix g = ConstRowMap(grad_output.data(), rows, out_channels_);
  const ConstRowMap col_m(cache.columns.data(), rows, k);

  const RowMatrix dw = g.transpose() * col_m;
  const double* src_w = dw.data();
  for (double& v : weight.grad) v += *src_w++;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int o = 0; o < out_channels_; ++o) bias.grad[o] += g(r, o);
  }

  if (!want_input_grad) return {};

  const RowMatrix w_m = ConstRowMap(weight.value.data(), out_channels_, k);
  const RowMatrix dcols = g * w_m;
  const int h = cache.in_height;
  const int w = cache.in_width;
  Tensor3 grad_input(h, w, in_channels_);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* row = dcols.data() + (static_cast<std::size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_ + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_ + kx - 1;
          if (ix < 0 || ix >= w) continue;
          auto dst = grad_input.pixel(iy * w + ix);
          const double* src = row + (ky * 3 + kx) * in_channels_;
          for (int c = 0; c < in_channels_; ++c) dst[c] += src[c];
        }
      }
    }
  }
  return grad_input;
}

void leaky_relu(Tensor3& t, double slope) {
  for (double& v : t.values()) {
    if (v < 0.0) v *= slope;
  }
}

void leaky_relu_backward(Tensor3& grad, const Tensor3& output, double slope) {
  require_same_shape(grad, output, "activation backward");
  auto g = grad.values();
  auto o = output.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(o[i] > 0.0)) g[i] *= slope;
  }
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("log_sum_exp of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> terms(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) terms[i] = std::exp(logits[i] - mx);
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return mx + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

Adam::Adam(std::vector<Param*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j] + options_.weight_decay * p.value[j];
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g;
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

}  // namespace camalign
