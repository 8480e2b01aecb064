#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "camalign/nn.hpp"
#include "camalign/tensor.hpp"

namespace camalign {

/// Identity on the forward pass; scales the incoming gradient by -coefficient
/// on the way back.
class GradientReversal {
 public:
  explicit GradientReversal(double coefficient = 1.0) : coefficient_(coefficient) {}

  double coefficient() const { return coefficient_; }

  const Tensor3& forward(const Tensor3& x) const { return x; }
  Tensor3 backward(const Tensor3& upstream) const;
  /// accum += -coefficient * upstream
  void backward_into(const Tensor3& upstream, Tensor3& accum) const;

 private:
  double coefficient_;
};

struct DiscriminatorConfig {
  int hidden1 = 64;
  int hidden2 = 32;
  double slope = 0.2;

  bool operator==(const DiscriminatorConfig&) const = default;
};

struct DiscriminatorCache {
  ConvCache conv1;
  ConvCache conv2;
  ConvCache conv3;
  Tensor3 act1;
  Tensor3 act2;
};

/// Fully-convolutional camera-domain discriminator: three 3x3 stride-1
/// convolutions (in -> hidden1 -> hidden2 -> domains) with leaky rectifiers
/// between them. Produces per-pixel domain logits at the input resolution.
class DomainDiscriminator {
 public:
  DomainDiscriminator(int in_channels, int domains, const DiscriminatorConfig& config,
                      const std::string& name, Rng& init_rng);

  int domains() const { return conv3.out_channels(); }
  int in_channels() const { return conv1.in_channels(); }
  double slope() const { return slope_; }

  Tensor3 logits(const FeatureMap& x, DiscriminatorCache* cache) const;
  /// Accumulates parameter gradients and returns dLoss/dInput.
  Tensor3 backward(const Tensor3& grad_logits, DiscriminatorCache& cache);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  Conv2d conv1;
  Conv2d conv2;
  Conv2d conv3;

 private:
  double slope_;
};

/// Image-level head: soft-max of the spatially averaged logits.
std::vector<double> image_level_probabilities(const DomainDiscriminator& d, const FeatureMap& x);
/// -log p(target) of the image-level head.
double image_level_loss(const DomainDiscriminator& d, const FeatureMap& x, int target);
/// Accumulates scale * dLoss/dParams and returns scale * dLoss/dx (before any reversal).
Tensor3 image_level_loss_backward(DomainDiscriminator& d, const FeatureMap& x, int target,
                                  double scale, double* loss_out);

/// -sum_p weight[p] * log p_pixel(target). `pixel_weight` has H*W entries.
double pixel_level_loss(const DomainDiscriminator& d, const FeatureMap& x,
                        std::span<const double> pixel_weight, int target);
Tensor3 pixel_level_loss_backward(DomainDiscriminator& d, const FeatureMap& x,
                                  std::span<const double> pixel_weight, int target, double scale,
                                  double* loss_out);

/// One two-way discriminator per unordered camera pair. Outputs are ordered
/// (min camera, max camera); at(u, v) and at(v, u) are the same object.
class PairwiseDiscriminatorBank {
 public:
  PairwiseDiscriminatorBank(int cameras, int in_channels, const DiscriminatorConfig& config,
                            const std::string& name, Rng& init_rng);

  int cameras() const { return cameras_; }
  std::size_t size() const { return discs_.size(); }

  DomainDiscriminator& at(int u, int v);
  const DomainDiscriminator& at(int u, int v) const;

  /// Output index of `camera` inside discriminator {u, v}.
  static int local_index(int u, int v, int camera) { return camera == std::min(u, v) ? 0 : 1; }

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  std::size_t slot(int u, int v) const;

  int cameras_;
  std::vector<DomainDiscriminator> discs_;
};

/// -sum_{k != camera} log p_{(camera,k)}(camera | x) over image-level heads.
double pairwise_adv_loss(const FeatureMap& x, int camera, const PairwiseDiscriminatorBank& bank);
Tensor3 pairwise_adv_loss_backward(const FeatureMap& x, int camera, PairwiseDiscriminatorBank& bank,
                                   double scale, double* loss_out);

/// -sum_c D^c log h(x)^c with the image-level head.
double multidomain_adv_loss(const FeatureMap& x, std::span<const double> domain_label,
                            const DomainDiscriminator& disc);

/// One-hot camera label of length n.
std::vector<double> domain_one_hot(int camera, int n);

/// A partition of the cameras into alignment groups (0-based camera ids).
class CameraGrouping {
 public:
  /// Throws ConfigError unless `groups` partitions {0..cameras-1}.
  CameraGrouping(int cameras, std::vector<std::vector<int>> groups);
  static CameraGrouping all(int cameras);
  static CameraGrouping singletons(int cameras);

  int cameras() const { return cameras_; }
  int group_count() const { return static_cast<int>(groups_.size()); }
  const std::vector<int>& members(int group) const { return groups_[group]; }
  int group_of(int camera) const { return group_of_[camera]; }
  int local_index(int camera) const { return local_[camera]; }
  bool is_single_group() const { return groups_.size() == 1; }

  /// 1-based "[[1,2],[3,4]]" form used by the config files.
  std::string to_string() const;
  bool operator==(const CameraGrouping&) const = default;

 private:
  int cameras_;
  std::vector<std::vector<int>> groups_;
  std::vector<int> group_of_;
  std::vector<int> local_;
};

/// Only the discriminator of the group that contains `camera` contributes,
/// with the domain label restricted to that group. `per_group[g]` has
/// members(g).size() outputs.
double grouped_multidomain_loss(const FeatureMap& x, int camera, const CameraGrouping& grouping,
                                std::span<const DomainDiscriminator> per_group);

enum class Variant { none, pairwise, single, single_pam, pairwise_pam };

Variant parse_variant(const std::string& text);
std::string to_string(Variant v);
bool uses_parts(Variant v);

/// Number of discriminators a variant instantiates for `cameras` cameras and
/// `parts` parts: C(n,2), 1, K or K*C(n,2).
std::size_t discriminator_count(Variant variant, int cameras, int parts);

}  // namespace camalign
