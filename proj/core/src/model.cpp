#include "camalign/model.hpp"

#include "camalign/error.hpp"

namespace camalign {

namespace {

CameraGrouping make_grouping(int cameras, const std::vector<std::vector<int>>& groups) {
  return groups.empty() ? CameraGrouping::all(cameras) : CameraGrouping(cameras, groups);
}

}  // namespace

AdversarialHead::AdversarialHead(int cameras, int feature_channels, AdversarialConfig config,
                                 Rng& init_rng)
    : config_(std::move(config)), cameras_(cameras), grouping_(make_grouping(cameras, config_.groups)) {
  const Variant v = config_.variant;
  if (uses_parts(v) && config_.parts < 1) throw ConfigError("pam.k must be >= 1");
  const bool pairwise = v == Variant::pairwise || v == Variant::pairwise_pam;
  if (pairwise && !grouping_.is_single_group()) {
    throw ConfigError("mdifl.groups is only supported by the single and single+pam variants");
  }
  const int parts = uses_parts(v) ? config_.parts : 1;
  const auto& dc = config_.discriminator;
  if (v == Variant::single || v == Variant::single_pam) {
    for (int g = 0; g < grouping_.group_count(); ++g) {
      const int n = static_cast<int>(grouping_.members(g).size());
      std::vector<DomainDiscriminator> discs;
      for (int k = 0; k < parts; ++k) {
        discs.emplace_back(feature_channels, n, dc,
                           "disc.group" + std::to_string(g + 1) + ".part" + std::to_string(k + 1),
                           init_rng);
      }
      groups_.push_back(std::move(discs));
    }
  } else if (pairwise) {
    for (int k = 0; k < parts; ++k) {
      banks_.emplace_back(cameras, feature_channels, dc, "disc.part" + std::to_string(k + 1), init_rng);
    }
  }
}

std::size_t AdversarialHead::discriminator_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.size();
  for (const auto& b : banks_) n += b.size();
  return n;
}

const PartMaskSet& AdversarialHead::require_masks(const PartMaskSet* masks) const {
  if (!masks) throw ConfigError(to_string(config_.variant) + " needs part masks");
  if (masks->parts() != config_.parts) {
    throw ShapeError("mask set has " + std::to_string(masks->parts()) + " parts, expected " +
                     std::to_string(config_.parts));
  }
  return *masks;
}

double AdversarialHead::loss(const FeatureMap& x, int camera, const PartMaskSet* masks) const {
  switch (config_.variant) {
    case Variant::none:
      return 0.0;
    case Variant::single: {
      const int g = grouping_.group_of(camera);
      const int n = static_cast<int>(grouping_.members(g).size());
      return multidomain_adv_loss(x, domain_one_hot(grouping_.local_index(camera), n), groups_[g].front());
    }
    case Variant::single_pam: {
      const int g = grouping_.group_of(camera);
      const int n = static_cast<int>(grouping_.members(g).size());
      return part_adv_loss(x, domain_one_hot(grouping_.local_index(camera), n), require_masks(masks),
                           groups_[g], config_.normalize_by_area);
    }
    case Variant::pairwise:
      return pairwise_adv_loss(x, camera, banks_[0]);
    case Variant::pairwise_pam: {
      const auto& m = require_masks(masks);
      double loss = 0.0;
      for (int k = 0; k < m.parts(); ++k) {
        const auto mask = m.mask(k);
        std::vector<double> weight = mask;
        if (config_.normalize_by_area) {
          const double area = m.areas()[k];
          for (double& w : weight) w /= area;
        }
        const FeatureMap masked = apply_mask(x, mask);
        for (int other = 0; other < cameras_; ++other) {
          if (other == camera) continue;
          loss += pixel_level_loss(banks_[k].at(camera, other), masked, weight,
                                   PairwiseDiscriminatorBank::local_index(camera, other, camera));
        }
      }
      return loss;
    }
  }
  return 0.0;
}

double AdversarialHead::backward(const FeatureMap& x, int camera, const PartMaskSet* masks,
                                 double scale, Tensor3& grad_x) {
  require_same_shape(x, grad_x, "adversarial backward");
  double loss = 0.0;
  switch (config_.variant) {
    case Variant::none:
      break;
    case Variant::single: {
      const int g = grouping_.group_of(camera);
      grad_x += image_level_loss_backward(groups_[g].front(), x, grouping_.local_index(camera), scale, &loss);
      break;
    }
    case Variant::single_pam: {
      const int g = grouping_.group_of(camera);
      grad_x += part_adv_loss_backward(x, grouping_.local_index(camera), require_masks(masks), groups_[g],
                                       config_.normalize_by_area, scale, &loss);
      break;
    }
    case Variant::pairwise:
      grad_x += pairwise_adv_loss_backward(x, camera, banks_[0], scale, &loss);
      break;
    case Variant::pairwise_pam: {
      const auto& m = require_masks(masks);
      for (int k = 0; k < m.parts(); ++k) {
        const auto mask = m.mask(k);
        std::vector<double> weight = mask;
        if (config_.normalize_by_area) {
          const double area = m.areas()[k];
          for (double& w : weight) w /= area;
        }
        const FeatureMap masked = apply_mask(x, mask);
        for (int other = 0; other < cameras_; ++other) {
          if (other == camera) continue;
          double term = 0.0;
          Tensor3 g = pixel_level_loss_backward(banks_[k].at(camera, other), masked, weight,
                                                PairwiseDiscriminatorBank::local_index(camera, other, camera),
                                                scale, &term);
          grad_x += apply_mask(g, mask);
          loss += term;
        }
      }
      break;
    }
  }
  return loss;
}

std::vector<Param*> AdversarialHead::params() {
  std::vector<Param*> out;
  for (auto& g : groups_) {
    for (auto& d : g) {
      for (Param* p : d.params()) out.push_back(p);
    }
  }
  for (auto& b : banks_) {
    for (Param* p : b.params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> AdversarialHead::params() const {
  std::vector<const Param*> out;
  for (const auto& g : groups_) {
    for (const auto& d : g) {
      for (const Param* p : d.params()) out.push_back(p);
    }
  }
  for (const auto& b : banks_) {
    for (const Param* p : b.params()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> ParameterPartition::all() const {
  std::vector<Param*> out = feature;
  out.insert(out.end(), classifier.begin(), classifier.end());
  out.insert(out.end(), discriminator.begin(), discriminator.end());
  return out;
}

namespace {

Backbone make_backbone(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "backbone"));
  return Backbone(config.backbone, rng);
}

std::vector<CameraClassifier> make_classifiers(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "classifier"));
  std::vector<CameraClassifier> out;
  for (int c = 0; c < config.cameras(); ++c) {
    out.emplace_back(config.backbone.channels.back(), config.classes_per_camera[c],
                     "classifier.camera" + std::to_string(c + 1), rng);
  }
  return out;
}

AdversarialHead make_head(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "discriminator"));
  return AdversarialHead(config.cameras(), config.backbone.channels.back(), config.adversarial, rng);
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed)
    : backbone(make_backbone(config, seed)),
      classifiers(make_classifiers(config, seed)),
      adversarial(make_head(config, seed)),
      config_(std::move(config)) {
  if (config_.cameras() < 1) throw ConfigError("model needs at least one camera");
}

ParameterPartition Model::partition() {
  ParameterPartition p;
  p.feature = backbone.params();
  for (auto& c : classifiers) {
    p.classifier.push_back(&c.weight);
    p.classifier.push_back(&c.bias);
  }
  p.discriminator = adversarial.params();
  return p;
}

std::vector<const Param*> Model::params() const {
  const auto all = const_cast<Model*>(this)->partition().all();
  return {all.begin(), all.end()};
}

void Model::zero_grad() {
  for (Param* p : partition().all()) p->zero_grad();
}

Embedding Model::embed(const Tracklet& tracklet) const {
  return pool_to_embedding(backbone.extract_feature_map(tracklet));
}

}  // namespace camalign
