#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/model.hpp"

namespace camalign {

/// Embeddings with the camera and identity of each row.
struct LabeledEmbeddings {
  int n_cameras = 0;
  std::vector<Embedding> embeddings;
  std::vector<int> cameras;
  std::vector<std::string> identities;

  std::size_t size() const { return embeddings.size(); }
};

/// Embeds every tracklet of a dataset that carries ground truth.
LabeledEmbeddings embed_dataset(const Model& model, const Dataset& dataset);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

struct QueryRanking {
  int query = 0;
  /// Gallery indices after exclusion, by ascending distance then index.
  std::vector<int> gallery;
  std::vector<double> distances;
  /// 0-based rank of the first correct match; -1 when there is none.
  int first_match = -1;
  double average_precision = 0.0;
};

struct RankingResult {
  std::vector<QueryRanking> queries;
  /// cmc[r] = fraction of evaluated queries with a correct match in the top r+1.
  std::vector<double> cmc;
  double map = 0.0;
  int evaluated = 0;
  /// Queries without any cross-camera match, left out of cmc and map.
  int skipped = 0;

  /// CMC at a 1-based rank; ranks past the curve read its last value.
  double rank(int k) const;
};

/// Ranks the gallery for each query by Euclidean distance. Gallery items
/// sharing both camera and identity with the query are excluded.
RankingResult rank_queries(const LabeledEmbeddings& query, const LabeledEmbeddings& gallery);

struct PairDistances {
  int camera_a = 0;
  int camera_b = 0;
  std::vector<double> same;
  std::vector<double> different;
};

struct DistanceHistogram {
  /// One entry per unordered camera pair (a < b).
  std::vector<PairDistances> pairs;
  std::vector<double> edges;
  std::vector<long> same_counts;
  std::vector<long> different_counts;
};

/// Cross-camera distances split by identity equality, pooled into `bins`
/// equal-width bins over [0, max distance].
DistanceHistogram distance_histogram(const LabeledEmbeddings& data, int bins = 30);
void write_histogram_csv(const DistanceHistogram& histogram, const std::filesystem::path& path);

struct ProbeOptions {
  double train_fraction = 0.5;
  int iterations = 300;
  double learning_rate = 0.5;
  double l2 = 1e-3;
  std::uint64_t seed = 11;
};

struct ProbeResult {
  double accuracy = 0.0;
  double chance = 0.0;
  int train_size = 0;
  int test_size = 0;
};

/// Linear soft-max probe from embedding to camera, fitted by full-batch
/// gradient descent on a per-camera stratified split. Features are centered
/// and scaled by their global RMS using training statistics.
ProbeResult domain_probe(const std::vector<Embedding>& embeddings, const std::vector<int>& cameras,
                         int n_cameras, const ProbeOptions& options = {});

/// Same probe with an explicit split.
ProbeResult domain_probe(const std::vector<Embedding>& train_x, const std::vector<int>& train_y,
                         const std::vector<Embedding>& test_x, const std::vector<int>& test_y,
                         int n_cameras, const ProbeOptions& options = {});

/// Coordinates on the top two principal components (centered, sign fixed
/// so the largest-magnitude loading is positive).
std::vector<std::array<double, 2>> principal_projection(const std::vector<Embedding>& embeddings);

struct FeatureRow {
  int camera = 0;
  int pseudo_label = -1;
  std::string identity;
  Embedding embedding;
  std::array<double, 2> projection{0.0, 0.0};
};

struct FeatureTable {
  bool has_identity = false;
  bool has_projection = false;
  std::vector<FeatureRow> rows;
};

FeatureTable feature_table(const Model& model, const Dataset& dataset, bool with_projection);
/// Header: camera,pseudo_label[,identity],f0..fN[,pc1,pc2]. Cameras and labels are 1-based.
void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_csv(const std::filesystem::path& path);

/// Writes rank1,rank5,rank10,rank20,map,queries,skipped.
void write_metrics_csv(const RankingResult& result, const std::filesystem::path& path);

}  // namespace camalign
