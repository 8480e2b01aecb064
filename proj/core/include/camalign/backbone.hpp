#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/nn.hpp"
#include "camalign/tensor.hpp"

namespace camalign {

struct BackboneConfig {
  /// One stride-2 3x3 convolution per entry.
  std::vector<int> channels{32, 64, 128, 256};
  /// Negative slope of the stage activation (0 = plain rectifier).
  double activation_slope = 0.0;
  int input_channels = 3;

  bool operator==(const BackboneConfig&) const = default;
};

struct FrameCache {
  std::vector<ConvCache> conv;
  std::vector<Tensor3> activations;
};

struct TrackletCache {
  std::vector<FrameCache> frames;
};

/// Convolutional feature extractor shared by every camera.
class Backbone {
 public:
  Backbone(BackboneConfig config, Rng& init_rng);

  const BackboneConfig& config() const { return config_; }
  int feature_channels() const { return config_.channels.back(); }
  /// Smallest frame height/width accepted: 2^stages.
  int min_input_extent() const;
  std::pair<int, int> output_shape(int height, int width) const;

  FeatureMap forward_frame(const Image& frame, FrameCache* cache) const;

  /// Per-frame maps averaged over time. The per-element sum runs in sorted
  /// order, so the result is independent of frame order.
  FeatureMap extract_feature_map(std::span<const Image* const> frames, TrackletCache* cache) const;
  FeatureMap extract_feature_map(const Tracklet& tracklet) const;

  /// Back-propagates dLoss/dFeatureMap through every cached frame and
  /// accumulates parameter gradients.
  void backward(const FeatureMap& grad, TrackletCache& cache);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  void check_frame(const Image& frame) const;

  BackboneConfig config_;
  std::vector<Conv2d> stages_;
};

/// Spatial average over H x W.
Embedding pool_to_embedding(const FeatureMap& fm);
/// Spreads an embedding gradient evenly back over an H x W map.
FeatureMap pool_backward(std::span<const double> grad, int height, int width);

/// Fully-connected soft-max head g_i over the pseudo identities of one camera.
class CameraClassifier {
 public:
  CameraClassifier(int feature_dim, int classes, const std::string& name, Rng& init_rng);

  int classes() const { return classes_; }
  int feature_dim() const { return feature_dim_; }

  std::vector<double> logits(std::span<const double> embedding) const;
  std::vector<double> probabilities(std::span<const double> embedding) const;

  /// classes x feature_dim, row-major.
  Param weight;
  Param bias;

 private:
  int feature_dim_;
  int classes_;
};

/// -(1/N) log p(true class), N the number of classes (or plain cross-entropy
/// when normalize_by_classes is false). `one_hot` must have one entry per class.
double id_loss(const CameraClassifier& g, std::span<const double> embedding,
               std::span<const double> one_hot, bool normalize_by_classes = true);
double id_loss(const CameraClassifier& g, std::span<const double> embedding, int label,
               bool normalize_by_classes = true);

/// Accumulates scale * dLoss/dParams into g and returns scale * dLoss/dEmbedding.
std::vector<double> id_loss_backward(CameraClassifier& g, std::span<const double> embedding,
                                     int label, bool normalize_by_classes, double scale,
                                     double* loss_out);

}  // namespace camalign
