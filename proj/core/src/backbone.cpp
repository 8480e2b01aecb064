#include "camalign/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace camalign {

Backbone::Backbone(BackboneConfig config, Rng& init_rng) : config_(std::move(config)) {
  if (config_.channels.empty()) throw ConfigError("backbone needs at least one stage");
  int in = config_.input_channels;
  for (std::size_t s = 0; s < config_.channels.size(); ++s) {
    stages_.emplace_back(in, config_.channels[s], 2, "backbone.stage" + std::to_string(s + 1));
    stages_.back().init_he(init_rng);
    in = config_.channels[s];
  }
}

int Backbone::min_input_extent() const { return 1 << stages_.size(); }

std::pair<int, int> Backbone::output_shape(int height, int width) const {
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    height = Conv2d::output_extent(height, 2);
    width = Conv2d::output_extent(width, 2);
  }
  return {height, width};
}

void Backbone::check_frame(const Image& frame) const {
  const int m = min_input_extent();
  if (frame.height() < m || frame.width() < m) {
    throw ShapeError("frame " + std::to_string(frame.height()) + "x" + std::to_string(frame.width()) +
                     " is below the backbone minimum of " + std::to_string(m) + "x" + std::to_string(m));
  }
  if (frame.channels() != config_.input_channels) {
    throw ShapeError("frame has " + std::to_string(frame.channels()) + " channels, backbone expects " +
                     std::to_string(config_.input_channels));
  }
}

FeatureMap Backbone::forward_frame(const Image& frame, FrameCache* cache) const {
  check_frame(frame);
  if (cache) {
    cache->conv.assign(stages_.size(), {});
    cache->activations.assign(stages_.size(), {});
  }
  Tensor3 x = frame;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    x = stages_[s].forward(x, cache ? &cache->conv[s] : nullptr);
    leaky_relu(x, config_.activation_slope);
    if (cache) cache->activations[s] = x;
  }
  return x;
}

FeatureMap Backbone::extract_feature_map(std::span<const Image* const> frames,
                                         TrackletCache* cache) const {
  if (frames.empty()) throw ShapeError("tracklet has no frames");
  std::vector<FeatureMap> maps;
  maps.reserve(frames.size());
  if (cache) cache->frames.assign(frames.size(), {});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    maps.push_back(forward_frame(*frames[t], cache ? &cache->frames[t] : nullptr));
  }
  FeatureMap mean(maps[0].height(), maps[0].width(), maps[0].channels());
  std::vector<double> column(maps.size());
  auto out = mean.values();
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t t = 0; t < maps.size(); ++t) column[t] = maps[t].values()[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    out[i] = sum * inv;
  }
  return mean;
}

FeatureMap Backbone::extract_feature_map(const Tracklet& tracklet) const {
  std::vector<const Image*> frames;
  for (const auto& f : *tracklet.frames) frames.push_back(&f);
  return extract_feature_map(frames, nullptr);
}

void Backbone::backward(const FeatureMap& grad, TrackletCache& cache) {
  const double inv = 1.0 / static_cast<double>(cache.frames.size());
  for (auto& frame : cache.frames) {
    Tensor3 g = grad;
    g *= inv;
    for (std::size_t s = stages_.size(); s-- > 0;) {
      leaky_relu_backward(g, frame.activations[s], config_.activation_slope);
      g = stages_[s].backward(g, frame.conv[s], s > 0);
    }
  }
}

std::vector<Param*> Backbone::params() {
  std::vector<Param*> out;
  for (auto& s : stages_) {
    out.push_back(&s.weight);
    out.push_back(&s.bias);
  }
  return out;
}

std::vector<const Param*> Backbone::params() const {
  std::vector<const Param*> out;
  for (const auto& s : stages_) {
    out.push_back(&s.weight);
    out.push_back(&s.bias);
  }
  return out;
}

Embedding pool_to_embedding(const FeatureMap& fm) {
  Embedding e(fm.channels(), 0.0);
  for (int p = 0; p < fm.pixels(); ++p) {
    const auto px = fm.pixel(p);
    for (int c = 0; c < fm.channels(); ++c) e[c] += px[c];
  }
  const double inv = 1.0 / fm.pixels();
  for (double& v : e) v *= inv;
  return e;
}

FeatureMap pool_backward(std::span<const double> grad, int height, int width) {
  FeatureMap out(height, width, static_cast<int>(grad.size()));
  const double inv = 1.0 / (static_cast<double>(height) * width);
  for (int p = 0; p < out.pixels(); ++p) {
    auto px = out.pixel(p);
    for (std::size_t c = 0; c < grad.size(); ++c) px[c] = grad[c] * inv;
  }
  return out;
}

CameraClassifier::CameraClassifier(int feature_dim, int classes, const std::string& name,
                                   Rng& init_rng)
    : weight(name + ".weight", static_cast<std::size_t>(classes) * feature_dim),
      bias(name + ".bias", static_cast<std::size_t>(classes)),
      feature_dim_(feature_dim),
      classes_(classes) {
  if (classes < 1) throw ConfigError(name + ": a camera classifier needs at least one class");
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (double& w : weight.value) w = init_rng.normal() * std_dev;
}

std::vector<double> CameraClassifier::logits(std::span<const double> embedding) const {
  if (static_cast<int>(embedding.size()) != feature_dim_) {
    throw ShapeError("classifier expects " + std::to_string(feature_dim_) + "-d embedding, got " +
                     std::to_string(embedding.size()));
  }
  std::vector<double> z(classes_);
  for (int j = 0; j < classes_; ++j) {
    const double* row = weight.value.data() + static_cast<std::size_t>(j) * feature_dim_;
    double acc = bias.value[j];
    for (int c = 0; c < feature_dim_; ++c) acc += row[c] * embedding[c];
    z[j] = acc;
  }
  return z;
}

std::vector<double> CameraClassifier::probabilities(std::span<const double> embedding) const {
  return softmax(logits(embedding));
}

double id_loss(const CameraClassifier& g, std::span<const double> embedding,
               std::span<const double> one_hot, bool normalize_by_classes) {
  if (static_cast<int>(one_hot.size()) != g.classes()) {
    throw ShapeError("label has " + std::to_string(one_hot.size()) + " entries, classifier has " +
                     std::to_string(g.classes()) + " classes");
  }
  const auto z = g.logits(embedding);
  const double lse = log_sum_exp(z);
  double loss = 0.0;
  for (std::size_t p = 0; p < z.size(); ++p) {
    if (one_hot[p] != 0.0) loss -= one_hot[p] * (z[p] - lse);
  }
  return normalize_by_classes ? loss / g.classes() : loss;
}

double id_loss(const CameraClassifier& g, std::span<const double> embedding, int label,
               bool normalize_by_classes) {
  if (label < 0 || label >= g.classes()) {
    throw ShapeError("label " + std::to_string(label) + " outside classifier range");
  }
  const auto z = g.logits(embedding);
  const double loss = log_sum_exp(z) - z[label];
  return normalize_by_classes ? loss / g.classes() : loss;
}

std::vector<double> id_loss_backward(CameraClassifier& g, std::span<const double> embedding,
                                     int label, bool normalize_by_classes, double scale,
                                     double* loss_out) {
  if (label < 0 || label >= g.classes()) {
    throw ShapeError("label " + std::to_string(label) + " outside classifier range");
  }
  const auto z = g.logits(embedding);
  const double lse = log_sum_exp(z);
  const double norm = normalize_by_classes ? 1.0 / g.classes() : 1.0;
  if (loss_out) *loss_out = (lse - z[label]) * norm;

  const int d = g.feature_dim();
  std::vector<double> grad_e(d, 0.0);
  for (int j = 0; j < g.classes(); ++j) {
    const double dz = (std::exp(z[j] - lse) - (j == label ? 1.0 : 0.0)) * norm * scale;
    g.bias.grad[j] += dz;
    double* wg = g.weight.grad.data() + static_cast<std::size_t>(j) * d;
    const double* w = g.weight.value.data() + static_cast<std::size_t>(j) * d;
    for (int c = 0; c < d; ++c) {
      wg[c] += dz * embedding[c];
      grad_e[c] += dz * w[c];
    }
  }
  return grad_e;
}

}  // namespace camalign
