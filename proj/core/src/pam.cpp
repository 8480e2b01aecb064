#include "camalign/pam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "camalign/error.hpp"
#include "camalign/rng.hpp"

namespace camalign {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::vector<double>> cluster_means(std::span<const std::vector<double>> points,
                                               std::span<const int> assignment, int k,
                                               const std::vector<std::vector<double>>* fallback) {
  const std::size_t dim = points.front().size();
  std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& m = means[assignment[i]];
    for (std::size_t d = 0; d < dim; ++d) m[d] += points[i][d];
    ++counts[assignment[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      if (fallback) means[c] = (*fallback)[c];
      continue;
    }
    for (double& v : means[c]) v /= counts[c];
  }
  return means;
}

int nearest(std::span<const double> p, const std::vector<std::vector<double>>& centers) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = squared_distance(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

double kmeans_objective(std::span<const std::vector<double>> points, std::span<const int> assignment,
                        int k) {
  const auto means = cluster_means(points, assignment, k, nullptr);
  double j = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) j += squared_distance(points[i], means[assignment[i]]);
  return j;
}

KMeansResult kmeans(std::span<const std::vector<double>> points, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (k > n) {
    throw ConfigError("k-means: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                      " available points");
  }

  for (const auto& p : points) {
    if (!std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); })) {
      throw ShapeError("k-means: non-finite point");
    }
  }

  // Farthest-point seeding.
  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.push_back(points[rng.index(n)]);
  std::vector<double> min_d(n);
  for (int i = 0; i < n; ++i) min_d[i] = squared_distance(points[i], centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    const int far = static_cast<int>(std::max_element(min_d.begin(), min_d.end()) - min_d.begin());
    centers.push_back(points[far]);
    for (int i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], squared_distance(points[i], centers.back()));
  }

  KMeansResult result;
  result.assignment.assign(n, -1);
  for (int it = 0; it < options.max_iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int a = nearest(points[i], centers);
      changed = changed || a != result.assignment[i];
      result.assignment[i] = a;
    }
    auto updated = cluster_means(points, result.assignment, k, &centers);
    double move = 0.0;
    for (int c = 0; c < k; ++c) move = std::max(move, std::sqrt(squared_distance(updated[c], centers[c])));
    centers = std::move(updated);
    result.iterations = it + 1;

    double j = 0.0;
    for (int i = 0; i < n; ++i) j += squared_distance(points[i], centers[result.assignment[i]]);
    result.objective_trace.push_back(j);
    if (!changed || move < options.tolerance) break;
  }

  // Empty-cluster repair: move the point farthest from its centroid (taken
  // from a cluster with at least two members) into the empty cluster.
  std::vector<int> counts(k, 0);
  for (int a : result.assignment) ++counts[a];
  for (int c = 0; c < k; ++c) {
    while (counts[c] == 0) {
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const int a = result.assignment[i];
        if (counts[a] < 2) continue;
        const double d = squared_distance(points[i], centers[a]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const int donor = result.assignment[far];
      result.assignment[far] = c;
      --counts[donor];
      ++counts[c];
      ++result.repairs;
      centers = cluster_means(points, result.assignment, k, &centers);
    }
  }
  result.centroids = std::move(centers);
  result.objective = kmeans_objective(points, result.assignment, k);
  return result;
}

PartMaskSet::PartMaskSet(int height, int width, std::vector<int> labels, int parts)
    : height_(height), width_(width), parts_(parts), labels_(std::move(labels)) {
  if (parts < 1) throw ConfigError("a mask set needs at least one part");
  if (static_cast<int>(labels_.size()) != height * width) {
    throw ShapeError("mask label map has " + std::to_string(labels_.size()) + " entries for a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  std::vector<double> sy(parts, 0.0);
  std::vector<double> sx(parts, 0.0);
  std::vector<int> count(parts, 0);
  for (int p = 0; p < height * width; ++p) {
    const int k = labels_[p];
    if (k < 0 || k >= parts) throw ShapeError("mask label out of range");
    sy[k] += p / width;
    sx[k] += p % width;
    ++count[k];
  }
  centroids_.resize(parts);
  for (int k = 0; k < parts; ++k) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    centroids_[k] = count[k] ? Centroid{sy[k] / count[k], sx[k] / count[k]} : Centroid{nan, nan};
  }
}

std::vector<int> PartMaskSet::areas() const {
  std::vector<int> a(parts_, 0);
  for (int l : labels_) ++a[l];
  return a;
}

std::vector<double> PartMaskSet::mask(int k) const {
  std::vector<double> m(labels_.size());
  for (std::size_t p = 0; p < labels_.size(); ++p) m[p] = labels_[p] == k ? 1.0 : 0.0;
  return m;
}

bool PartMaskSet::has_empty_part() const {
  const auto a = areas();
  return std::find(a.begin(), a.end(), 0) != a.end();
}

bool PartMaskSet::sorted() const {
  for (int k = 1; k < parts_; ++k) {
    if (centroids_[k].y < centroids_[k - 1].y) return false;
  }
  return true;
}

PartMaskSet cluster_parts(const FeatureMap& fm, int k, std::uint64_t seed,
                          const KMeansOptions& options) {
  if (k < 1 || k > fm.pixels()) {
    throw ConfigError("cluster_parts: K = " + std::to_string(k) + " must lie in [1, " +
                      std::to_string(fm.pixels()) + "] for a " + std::to_string(fm.height()) + "x" +
                      std::to_string(fm.width()) + " map");
  }
  std::vector<std::vector<double>> points(fm.pixels());
  for (int p = 0; p < fm.pixels(); ++p) {
    const auto px = fm.pixel(p);
    points[p].assign(px.begin(), px.end());
  }
  auto result = kmeans(points, k, seed, options);
  return PartMaskSet(fm.height(), fm.width(), std::move(result.assignment), k);
}

PartMaskSet sort_masks(const PartMaskSet& masks, std::vector<int>* order) {
  if (masks.has_empty_part()) throw ShapeError("sort_masks: empty mask must be repaired before sorting");
  std::vector<int> idx(masks.parts());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& c = masks.centroids();
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (c[a].y != c[b].y) return c[a].y < c[b].y;
    if (c[a].x != c[b].x) return c[a].x < c[b].x;
    return a < b;
  });
  std::vector<int> new_label(masks.parts());
  for (int pos = 0; pos < masks.parts(); ++pos) new_label[idx[pos]] = pos;
  std::vector<int> labels(masks.labels().size());
  for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = new_label[masks.labels()[p]];
  if (order) *order = idx;
  return PartMaskSet(masks.height(), masks.width(), std::move(labels), masks.parts());
}

PartMaskSet stripe_masks(int height, int width, int k) {
  if (k < 1 || k > height) {
    throw ConfigError("strict stripes: K = " + std::to_string(k) + " must lie in [1, " +
                      std::to_string(height) + "]");
  }
  std::vector<int> labels(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) labels[y * width + x] = y * k / height;
  }
  return PartMaskSet(height, width, std::move(labels), k);
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "adaptive") return MaskMode::adaptive;
  if (text == "strict_stripes") return MaskMode::strict_stripes;
  throw ConfigError("unknown pam.mode '" + text + "' (expected adaptive or strict_stripes)");
}

std::string to_string(MaskMode mode) {
  return mode == MaskMode::adaptive ? "adaptive" : "strict_stripes";
}

PartMaskSet build_part_masks(const FeatureMap& fm, int k, MaskMode mode, std::uint64_t seed) {
  if (mode == MaskMode::strict_stripes) return stripe_masks(fm.height(), fm.width(), k);
  return sort_masks(cluster_parts(fm, k, seed));
}

FeatureMap apply_mask(const FeatureMap& fm, std::span<const double> mask) {
  if (static_cast<int>(mask.size()) != fm.pixels()) {
    throw ShapeError("mask has " + std::to_string(mask.size()) + " pixels, feature map has " +
                     std::to_string(fm.pixels()));
  }
  FeatureMap out = fm;
  for (int p = 0; p < out.pixels(); ++p) {
    if (mask[p] == 1.0) continue;
    for (double& v : out.pixel(p)) v *= mask[p];
  }
  return out;
}

namespace {

void check_part_inputs(const FeatureMap& fm, const PartMaskSet& masks, std::size_t discs) {
  if (masks.height() != fm.height() || masks.width() != fm.width()) {
    throw ShapeError("mask grid " + std::to_string(masks.height()) + "x" + std::to_string(masks.width()) +
                     " does not match feature map " + std::to_string(fm.height()) + "x" +
                     std::to_string(fm.width()));
  }
  if (static_cast<int>(discs) != masks.parts()) {
    throw ShapeError("need one part discriminator per mask");
  }
}

int one_hot_target(std::span<const double> label) {
  int target = -1;
  for (std::size_t c = 0; c < label.size(); ++c) {
    if (label[c] == 1.0 && target < 0) {
      target = static_cast<int>(c);
    } else if (label[c] != 0.0) {
      target = -2;
    }
  }
  if (target < 0) throw ShapeError("domain label must be one-hot");
  return target;
}

std::vector<double> part_weight(const std::vector<double>& mask, bool normalize) {
  if (!normalize) return mask;
  double area = 0.0;
  for (double m : mask) area += m;
  std::vector<double> w = mask;
  if (area > 0.0) {
    for (double& v : w) v /= area;
  }
  return w;
}

}  // namespace

double part_adv_loss(const FeatureMap& fm, std::span<const double> domain_label,
                     const PartMaskSet& masks, std::span<const DomainDiscriminator> discs,
                     bool normalize_by_area) {
  check_part_inputs(fm, masks, discs.size());
  const int target = one_hot_target(domain_label);
  double loss = 0.0;
  for (int k = 0; k < masks.parts(); ++k) {
    if (static_cast<int>(domain_label.size()) != discs[k].domains()) {
      throw ShapeError("domain label length does not match the part discriminator");
    }
    const auto m = masks.mask(k);
    loss += pixel_level_loss(discs[k], apply_mask(fm, m), part_weight(m, normalize_by_area), target);
  }
  return loss;
}

Tensor3 part_adv_loss_backward(const FeatureMap& fm, int target, const PartMaskSet& masks,
                               std::span<DomainDiscriminator> discs, bool normalize_by_area,
                               double scale, double* loss_out) {
  check_part_inputs(fm, masks, discs.size());
  Tensor3 grad(fm.height(), fm.width(), fm.channels());
  double loss = 0.0;
  for (int k = 0; k < masks.parts(); ++k) {
    const auto m = masks.mask(k);
    double term = 0.0;
    Tensor3 g = pixel_level_loss_backward(discs[k], apply_mask(fm, m), part_weight(m, normalize_by_area),
                                          target, scale, &term);
    loss += term;
    grad += apply_mask(g, m);
  }
  if (loss_out) *loss_out = loss;
  return grad;
}

bool ReclusterPolicy::operator()(long step) const {
  if (interval_ == 0) return true;
  if (interval_ < 0) return step == 0;
  return step % interval_ == 0;
}

Tensor3 mask_label_image(const PartMaskSet& masks, int cell) {
  Tensor3 img(masks.height() * cell, masks.width() * cell, 1);
  const double denom = masks.parts() > 1 ? masks.parts() - 1.0 : 1.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      img(y, x, 0) = masks.labels()[(y / cell) * masks.width() + x / cell] / denom;
    }
  }
  return img;
}

}  // namespace camalign
