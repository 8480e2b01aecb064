#include "camalign/mdifl.hpp"

#include <algorithm>
#include <cmath>

#include "camalign/error.hpp"

namespace camalign {

Tensor3 GradientReversal::backward(const Tensor3& upstream) const {
  Tensor3 g = upstream;
  g *= -coefficient_;
  return g;
}

void GradientReversal::backward_into(const Tensor3& upstream, Tensor3& accum) const {
  require_same_shape(upstream, accum, "gradient reversal");
  auto dst = accum.values();
  auto src = upstream.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += -coefficient_ * src[i];
}

DomainDiscriminator::DomainDiscriminator(int in_channels, int domains,
                                         const DiscriminatorConfig& config,
                                         const std::string& name, Rng& init_rng)
    : conv1(in_channels, config.hidden1, 1, name + ".conv1"),
      conv2(config.hidden1, config.hidden2, 1, name + ".conv2"),
      conv3(config.hidden2, domains, 1, name + ".conv3"),
      slope_(config.slope) {
  if (domains < 1) throw ConfigError(name + ": discriminator needs at least one domain");
  conv1.init_he(init_rng);
  conv2.init_he(init_rng);
  conv3.init_he(init_rng);
}

Tensor3 DomainDiscriminator::logits(const FeatureMap& x, DiscriminatorCache* cache) const {
  Tensor3 a1 = conv1.forward(x, cache ? &cache->conv1 : nullptr);
  leaky_relu(a1, slope_);
  Tensor3 a2 = conv2.forward(a1, cache ? &cache->conv2 : nullptr);
  leaky_relu(a2, slope_);
  Tensor3 out = conv3.forward(a2, cache ? &cache->conv3 : nullptr);
  if (cache) {
    cache->act1 = std::move(a1);
    cache->act2 = std::move(a2);
  }
  return out;
}

Tensor3 DomainDiscriminator::backward(const Tensor3& grad_logits, DiscriminatorCache& cache) {
  Tensor3 g = conv3.backward(grad_logits, cache.conv3, true);
  leaky_relu_backward(g, cache.act2, slope_);
  g = conv2.backward(g, cache.conv2, true);
  leaky_relu_backward(g, cache.act1, slope_);
  return conv1.backward(g, cache.conv1, true);
}

std::vector<Param*> DomainDiscriminator::params() {
  return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias, &conv3.weight, &conv3.bias};
}

std::vector<const Param*> DomainDiscriminator::params() const {
  return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias, &conv3.weight, &conv3.bias};
}

namespace {

std::vector<double> mean_logits(const Tensor3& logits) {
  std::vector<double> m(logits.channels(), 0.0);
  for (int p = 0; p < logits.pixels(); ++p) {
    const auto px = logits.pixel(p);
    for (int c = 0; c < logits.channels(); ++c) m[c] += px[c];
  }
  for (double& v : m) v /= logits.pixels();
  return m;
}

void check_target(const DomainDiscriminator& d, int target) {
  if (target < 0 || target >= d.domains()) {
    throw ShapeError("domain target " + std::to_string(target) + " outside discriminator range " +
                     std::to_string(d.domains()));
  }
}

void check_weights(const FeatureMap& x, std::span<const double> w) {
  if (static_cast<int>(w.size()) != x.pixels()) {
    throw ShapeError("pixel weight has " + std::to_string(w.size()) + " entries, feature map has " +
                     std::to_string(x.pixels()) + " pixels");
  }
}

}  // namespace

std::vector<double> image_level_probabilities(const DomainDiscriminator& d, const FeatureMap& x) {
  return softmax(mean_logits(d.logits(x, nullptr)));
}

double image_level_loss(const DomainDiscriminator& d, const FeatureMap& x, int target) {
  check_target(d, target);
  const auto m = mean_logits(d.logits(x, nullptr));
  return log_sum_exp(m) - m[target];
}

Tensor3 image_level_loss_backward(DomainDiscriminator& d, const FeatureMap& x, int target,
                                  double scale, double* loss_out) {
  check_target(d, target);
  DiscriminatorCache cache;
  const Tensor3 z = d.logits(x, &cache);
  const auto m = mean_logits(z);
  const double lse = log_sum_exp(m);
  if (loss_out) *loss_out = lse - m[target];
  Tensor3 gz(z.height(), z.width(), z.channels());
  const double inv = scale / z.pixels();
  for (int c = 0; c < z.channels(); ++c) {
    const double dm = (std::exp(m[c] - lse) - (c == target ? 1.0 : 0.0)) * inv;
    for (int p = 0; p < z.pixels(); ++p) gz.pixel(p)[c] = dm;
  }
  return d.backward(gz, cache);
}

double pixel_level_loss(const DomainDiscriminator& d, const FeatureMap& x,
                        std::span<const double> pixel_weight, int target) {
  check_target(d, target);
  check_weights(x, pixel_weight);
  const Tensor3 z = d.logits(x, nullptr);
  double loss = 0.0;
  for (int p = 0; p < z.pixels(); ++p) {
    if (pixel_weight[p] == 0.0) continue;
    const auto px = z.pixel(p);
    loss += pixel_weight[p] * (log_sum_exp(px) - px[target]);
  }
  return loss;
}

Tensor3 pixel_level_loss_backward(DomainDiscriminator& d, const FeatureMap& x,
                                  std::span<const double> pixel_weight, int target, double scale,
                                  double* loss_out) {
  check_target(d, target);
  check_weights(x, pixel_weight);
  DiscriminatorCache cache;
  const Tensor3 z = d.logits(x, &cache);
  Tensor3 gz(z.height(), z.width(), z.channels());
  double loss = 0.0;
  for (int p = 0; p < z.pixels(); ++p) {
    if (pixel_weight[p] == 0.0) continue;
    const auto px = z.pixel(p);
    const double lse = log_sum_exp(px);
    loss += pixel_weight[p] * (lse - px[target]);
    auto g = gz.pixel(p);
    for (int c = 0; c < z.channels(); ++c) {
      g[c] = (std::exp(px[c] - lse) - (c == target ? 1.0 : 0.0)) * pixel_weight[p] * scale;
    }
  }
  if (loss_out) *loss_out = loss;
  return d.backward(gz, cache);
}

PairwiseDiscriminatorBank::PairwiseDiscriminatorBank(int cameras, int in_channels,
                                                     const DiscriminatorConfig& config,
                                                     const std::string& name, Rng& init_rng)
    : cameras_(cameras) {
  if (cameras < 1) throw ConfigError("pairwise bank needs at least one camera");
  for (int u = 0; u < cameras; ++u) {
    for (int v = u + 1; v < cameras; ++v) {
      discs_.emplace_back(in_channels, 2, config,
                          name + ".pair" + std::to_string(u + 1) + "_" + std::to_string(v + 1),
                          init_rng);
    }
  }
}

std::size_t PairwiseDiscriminatorBank::slot(int u, int v) const {
  if (u == v || u < 0 || v < 0 || u >= cameras_ || v >= cameras_) {
    throw ShapeError("no pairwise discriminator for cameras (" + std::to_string(u + 1) + "," +
                     std::to_string(v + 1) + ")");
  }
  const int a = std::min(u, v);
  const int b = std::max(u, v);
  // Row-major upper triangle without the diagonal.
  return static_cast<std::size_t>(a) * (2 * cameras_ - a - 1) / 2 + (b - a - 1);
}

DomainDiscriminator& PairwiseDiscriminatorBank::at(int u, int v) { return discs_[slot(u, v)]; }
const DomainDiscriminator& PairwiseDiscriminatorBank::at(int u, int v) const {
  return discs_[slot(u, v)];
}

std::vector<Param*> PairwiseDiscriminatorBank::params() {
  std::vector<Param*> out;
  for (auto& d : discs_) {
    for (Param* p : d.params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> PairwiseDiscriminatorBank::params() const {
  std::vector<const Param*> out;
  for (const auto& d : discs_) {
    for (const Param* p : d.params()) out.push_back(p);
  }
  return out;
}

double pairwise_adv_loss(const FeatureMap& x, int camera, const PairwiseDiscriminatorBank& bank) {
  double loss = 0.0;
  for (int k = 0; k < bank.cameras(); ++k) {
    if (k == camera) continue;
    loss += image_level_loss(bank.at(camera, k), x,
                             PairwiseDiscriminatorBank::local_index(camera, k, camera));
  }
  return loss;
}

Tensor3 pairwise_adv_loss_backward(const FeatureMap& x, int camera, PairwiseDiscriminatorBank& bank,
                                   double scale, double* loss_out) {
  Tensor3 grad(x.height(), x.width(), x.channels());
  double loss = 0.0;
  for (int k = 0; k < bank.cameras(); ++k) {
    if (k == camera) continue;
    double term = 0.0;
    grad += image_level_loss_backward(bank.at(camera, k), x,
                                      PairwiseDiscriminatorBank::local_index(camera, k, camera),
                                      scale, &term);
    loss += term;
  }
  if (loss_out) *loss_out = loss;
  return grad;
}

double multidomain_adv_loss(const FeatureMap& x, std::span<const double> domain_label,
                            const DomainDiscriminator& disc) {
  if (static_cast<int>(domain_label.size()) != disc.domains()) {
    throw ShapeError("domain label has " + std::to_string(domain_label.size()) +
                     " entries, discriminator has " + std::to_string(disc.domains()) + " domains");
  }
  const auto m = mean_logits(disc.logits(x, nullptr));
  const double lse = log_sum_exp(m);
  double loss = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (domain_label[c] != 0.0) loss -= domain_label[c] * (m[c] - lse);
  }
  return loss;
}

std::vector<double> domain_one_hot(int camera, int n) {
  if (camera < 0 || camera >= n) throw ShapeError("camera outside domain range");
  std::vector<double> v(n, 0.0);
  v[camera] = 1.0;
  return v;
}

CameraGrouping::CameraGrouping(int cameras, std::vector<std::vector<int>> groups)
    : cameras_(cameras), groups_(std::move(groups)), group_of_(cameras, -1), local_(cameras, -1) {
  if (cameras < 1) throw ConfigError("grouping needs at least one camera");
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].empty()) throw ConfigError("camera groups must not be empty");
    for (std::size_t l = 0; l < groups_[g].size(); ++l) {
      const int c = groups_[g][l];
      if (c < 0 || c >= cameras) {
        throw ConfigError("camera " + std::to_string(c + 1) + " in groups is out of range");
      }
      if (group_of_[c] >= 0) {
        throw ConfigError("camera " + std::to_string(c + 1) + " appears in more than one group");
      }
      group_of_[c] = static_cast<int>(g);
      local_[c] = static_cast<int>(l);
    }
  }
  for (int c = 0; c < cameras; ++c) {
    if (group_of_[c] < 0) {
      throw ConfigError("camera " + std::to_string(c + 1) + " is missing from the groups");
    }
  }
}

CameraGrouping CameraGrouping::all(int cameras) {
  std::vector<int> g(cameras);
  for (int c = 0; c < cameras; ++c) g[c] = c;
  return CameraGrouping(cameras, {g});
}

CameraGrouping CameraGrouping::singletons(int cameras) {
  std::vector<std::vector<int>> groups;
  for (int c = 0; c < cameras; ++c) groups.push_back({c});
  return CameraGrouping(cameras, groups);
}

std::string CameraGrouping::to_string() const {
  std::string s = "[";
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (g) s += ",";
    s += "[";
    for (std::size_t l = 0; l < groups_[g].size(); ++l) {
      if (l) s += ",";
      s += std::to_string(groups_[g][l] + 1);
    }
    s += "]";
  }
  return s + "]";
}

double grouped_multidomain_loss(const FeatureMap& x, int camera, const CameraGrouping& grouping,
                                std::span<const DomainDiscriminator> per_group) {
  if (static_cast<int>(per_group.size()) != grouping.group_count()) {
    throw ShapeError("one discriminator per camera group is required");
  }
  const int g = grouping.group_of(camera);
  const int n = static_cast<int>(grouping.members(g).size());
  return multidomain_adv_loss(x, domain_one_hot(grouping.local_index(camera), n), per_group[g]);
}

Variant parse_variant(const std::string& text) {
  if (text == "none") return Variant::none;
  if (text == "pairwise") return Variant::pairwise;
  if (text == "single") return Variant::single;
  if (text == "single+pam") return Variant::single_pam;
  if (text == "pairwise+pam") return Variant::pairwise_pam;
  throw ConfigError("unknown mdifl.variant '" + text +
                    "' (expected none, pairwise, single, single+pam, pairwise+pam)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::pairwise: return "pairwise";
    case Variant::single: return "single";
    case Variant::single_pam: return "single+pam";
    case Variant::pairwise_pam: return "pairwise+pam";
  }
  return "none";
}

bool uses_parts(Variant v) { return v == Variant::single_pam || v == Variant::pairwise_pam; }

std::size_t discriminator_count(Variant variant, int cameras, int parts) {
  const auto n = static_cast<std::size_t>(std::max(cameras, 0));
  const std::size_t pairs = n * (n > 0 ? n - 1 : 0) / 2;
  const auto k = static_cast<std::size_t>(std::max(parts, 0));
  switch (variant) {
    case Variant::none: return 0;
    case Variant::pairwise: return pairs;
    case Variant::single: return 1;
    case Variant::single_pam: return k;
    case Variant::pairwise_pam: return k * pairs;
  }
  return 0;
}

}  // namespace camalign
