#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "camalign/mdifl.hpp"
#include "camalign/tensor.hpp"

namespace camalign {

struct KMeansOptions {
  int max_iterations = 50;
  double tolerance = 1e-6;  // on the largest centroid move
};

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  /// Sum of squared distances to the cluster means, recorded after every
  /// Lloyd iteration. Non-increasing.
  std::vector<double> objective_trace;
  double objective = 0.0;
  int iterations = 0;
  /// Points moved into empty clusters after the Lloyd loop.
  int repairs = 0;
};

/// Lloyd's algorithm with farthest-point seeding (first seed drawn from
/// `seed`). Every cluster is nonempty on return. Requires 1 <= k <= n.
KMeansResult kmeans(std::span<const std::vector<double>> points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Sum of squared distances of each point to the mean of its cluster.
double kmeans_objective(std::span<const std::vector<double>> points, std::span<const int> assignment,
                        int k);

struct Centroid {
  double y = 0.0;
  double x = 0.0;
};

/// K disjoint binary masks covering an H x W grid, stored as a label map.
class PartMaskSet {
 public:
  PartMaskSet(int height, int width, std::vector<int> labels, int parts);

  int height() const { return height_; }
  int width() const { return width_; }
  int parts() const { return parts_; }
  const std::vector<int>& labels() const { return labels_; }
  /// Mean (row, col) of each mask's pixels; NaN for an empty mask.
  const std::vector<Centroid>& centroids() const { return centroids_; }
  std::vector<int> areas() const;

  /// Binary H*W mask of part k.
  std::vector<double> mask(int k) const;
  bool has_empty_part() const;
  /// True when centroid rows are non-decreasing with the part index.
  bool sorted() const;

 private:
  int height_;
  int width_;
  int parts_;
  std::vector<int> labels_;
  std::vector<Centroid> centroids_;
};

/// K-means over the H*W channel vectors of a feature map (unsorted masks).
PartMaskSet cluster_parts(const FeatureMap& fm, int k, std::uint64_t seed,
                          const KMeansOptions& options = {});

/// Reorders masks top to bottom by centroid row, then by centroid column,
/// then by original index. `order`, when given, receives the original index
/// of each output part. Throws on an empty mask.
PartMaskSet sort_masks(const PartMaskSet& masks, std::vector<int>* order = nullptr);

/// K uniform horizontal stripes (row r goes to part floor(r*K/H)).
PartMaskSet stripe_masks(int height, int width, int k);

enum class MaskMode { adaptive, strict_stripes };
MaskMode parse_mask_mode(const std::string& text);
std::string to_string(MaskMode mode);

/// Masks used by the part-aware loss: sorted K-means parts or stripes.
PartMaskSet build_part_masks(const FeatureMap& fm, int k, MaskMode mode, std::uint64_t seed);

/// Zeroes every pixel outside `mask`.
FeatureMap apply_mask(const FeatureMap& fm, std::span<const double> mask);

/// -sum_{k,h,w,c} M_k D^c log(h^k(M_k (x) X))^{(h,w,c)}. With
/// normalize_by_area each part's term is divided by its pixel count.
double part_adv_loss(const FeatureMap& fm, std::span<const double> domain_label,
                     const PartMaskSet& masks, std::span<const DomainDiscriminator> discs,
                     bool normalize_by_area = false);

/// Accumulates scale * dLoss/dParams into the part discriminators and returns
/// scale * dLoss/dX (before gradient reversal).
Tensor3 part_adv_loss_backward(const FeatureMap& fm, int target, const PartMaskSet& masks,
                               std::span<DomainDiscriminator> discs, bool normalize_by_area,
                               double scale, double* loss_out);

/// Decides when per-sample masks are recomputed. interval 0: every step;
/// interval N > 0: steps divisible by N; negative: only step 0.
class ReclusterPolicy {
 public:
  explicit ReclusterPolicy(long freeze_interval = 0) : interval_(freeze_interval) {}
  bool operator()(long step) const;
  long interval() const { return interval_; }

 private:
  long interval_;
};

/// Grayscale label image (part k drawn at intensity k/(K-1)), each cell
/// enlarged to `cell` pixels.
Tensor3 mask_label_image(const PartMaskSet& masks, int cell = 8);

}  // namespace camalign
