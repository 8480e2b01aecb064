#pragma once

// Independent reference implementations used to check the library: direct
// loops, no shared helpers with the code under test.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "camalign/backbone.hpp"
#include "camalign/mdifl.hpp"
#include "camalign/rng.hpp"
#include "camalign/tensor.hpp"

namespace camalign::oracle {

Tensor3 random_tensor(int height, int width, int channels, Rng& rng, double scale = 1.0);

/// Direct 3x3 zero-padded convolution.
Tensor3 conv3x3(const Tensor3& input, const Conv2d& conv);

/// Per-pixel logits of a discriminator by direct loops.
Tensor3 discriminator_logits(const DomainDiscriminator& d, const Tensor3& x);

/// log p(target) of a soft-max over `logits`.
double log_softmax(std::span<const double> logits, int target);

double id_loss(const CameraClassifier& g, std::span<const double> embedding, int label, bool normalize);

/// Image-level head against a one-hot label.
double multidomain_loss(const DomainDiscriminator& d, const Tensor3& x, std::span<const double> one_hot);

double pairwise_loss(const PairwiseDiscriminatorBank& bank, const Tensor3& x, int camera);

/// Hook that may rewrite the logits of part k before the loss reads them.
using LogitHook = std::function<void(int part, Tensor3& logits)>;

/// Masked pixel-wise loss over parts given an H*W label map.
double part_loss(const Tensor3& x, int target, std::span<const int> labels, int parts,
                 std::span<const DomainDiscriminator> discs, bool normalize_by_area,
                 const LogitHook& hook = {});

struct KMeansEnumeration {
  double optimum = 0.0;
  /// Canonical partitions (first point in cluster 0) that are Lloyd fixed points.
  std::vector<std::vector<int>> local_optima;
};

/// Enumerates every assignment of n <= 16 points into k <= 2 nonempty clusters.
KMeansEnumeration enumerate_kmeans(const std::vector<std::vector<double>>& points, int k);
double kmeans_objective(const std::vector<std::vector<double>>& points, const std::vector<int>& labels, int k);
std::vector<int> canonical_labels(const std::vector<int>& labels);

struct MetricOracle {
  /// Per evaluated query: 0-based rank of the first correct match.
  std::vector<int> first_match;
  std::vector<double> average_precision;
  std::vector<double> cmc;
  double map = 0.0;
  int skipped = 0;
};

/// Counts, for every gallery item, how many items precede it in
/// (distance, index) order, then reads CMC and AP off those ranks.
MetricOracle enumerate_metrics(const std::vector<std::vector<double>>& query, const std::vector<int>& query_camera,
                               const std::vector<int>& query_id, const std::vector<std::vector<double>>& gallery,
                               const std::vector<int>& gallery_camera, const std::vector<int>& gallery_id);

}  // namespace camalign::oracle
