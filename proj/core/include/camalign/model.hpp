#pragma once

#include <cstdint>
#include <vector>

#include "camalign/backbone.hpp"
#include "camalign/mdifl.hpp"
#include "camalign/pam.hpp"

namespace camalign {

struct AdversarialConfig {
  Variant variant = Variant::single_pam;
  int parts = 3;
  MaskMode mask_mode = MaskMode::adaptive;
  bool normalize_by_area = false;
  /// 0-based camera groups; empty means one group holding every camera.
  std::vector<std::vector<int>> groups;
  DiscriminatorConfig discriminator;

  bool operator==(const AdversarialConfig&) const = default;
};

/// The discriminators of one MDIFL variant and the loss they define.
///   single        one image-level discriminator per camera group
///   single+pam    K pixel-level part discriminators per camera group
///   pairwise      one image-level discriminator per camera pair
///   pairwise+pam  K pixel-level part discriminators per camera pair
class AdversarialHead {
 public:
  AdversarialHead(int cameras, int feature_channels, AdversarialConfig config, Rng& init_rng);

  const AdversarialConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  bool needs_masks() const { return uses_parts(config_.variant); }
  const CameraGrouping& grouping() const { return grouping_; }
  std::size_t discriminator_count() const;

  /// Adversarial loss of a sample from `camera`. `masks` is required by the
  /// part-aware variants and ignored otherwise.
  double loss(const FeatureMap& x, int camera, const PartMaskSet* masks) const;

  /// Returns the loss, accumulates scale * dLoss/dTheta_h and adds
  /// scale * dLoss/dX to grad_x. Reversal is the caller's job.
  double backward(const FeatureMap& x, int camera, const PartMaskSet* masks, double scale,
                  Tensor3& grad_x);

  /// Discriminators of a camera group (single: 1, single+pam: K).
  std::vector<DomainDiscriminator>& group_discriminators(int group) { return groups_[group]; }
  const std::vector<DomainDiscriminator>& group_discriminators(int group) const { return groups_[group]; }
  /// Pairwise bank of a part (pairwise: part 0 only).
  PairwiseDiscriminatorBank& pair_bank(int part) { return banks_[part]; }
  const PairwiseDiscriminatorBank& pair_bank(int part) const { return banks_[part]; }

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  const PartMaskSet& require_masks(const PartMaskSet* masks) const;

  AdversarialConfig config_;
  int cameras_;
  CameraGrouping grouping_;
  std::vector<std::vector<DomainDiscriminator>> groups_;
  std::vector<PairwiseDiscriminatorBank> banks_;
};

struct ModelConfig {
  BackboneConfig backbone;
  AdversarialConfig adversarial;
  /// Pseudo-identity count of each camera.
  std::vector<int> classes_per_camera;

  int cameras() const { return static_cast<int>(classes_per_camera.size()); }
  bool operator==(const ModelConfig&) const = default;
};

/// theta_f, theta_g and theta_h: disjoint and together exhaustive.
struct ParameterPartition {
  std::vector<Param*> feature;
  std::vector<Param*> classifier;
  std::vector<Param*> discriminator;

  std::vector<Param*> all() const;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int cameras() const { return config_.cameras(); }

  ParameterPartition partition();
  /// Every trainable block in partition order (feature, classifier, discriminator).
  std::vector<const Param*> params() const;
  void zero_grad();

  Embedding embed(const Tracklet& tracklet) const;

  Backbone backbone;
  std::vector<CameraClassifier> classifiers;
  AdversarialHead adversarial;

 private:
  ModelConfig config_;
};

}  // namespace camalign
