#include "camalign/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "camalign/config.hpp"
#include "camalign/rng.hpp"

namespace camalign {

LabeledEmbeddings embed_dataset(const Model& model, const Dataset& dataset) {
  const auto& ids = dataset.ground_truth();
  LabeledEmbeddings out;
  out.n_cameras = dataset.tracklets.n_cameras;
  out.embeddings.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tracklet& t = dataset.tracklets.tracklets[i];
    out.embeddings.push_back(model.embed(t));
    out.cameras.push_back(t.camera);
    out.identities.push_back(ids[i]);
  }
  return out;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("embedding lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double RankingResult::rank(int k) const {
  if (cmc.empty()) return 0.0;
  const int i = std::clamp(k, 1, static_cast<int>(cmc.size())) - 1;
  return cmc[i];
}

RankingResult rank_queries(const LabeledEmbeddings& query, const LabeledEmbeddings& gallery) {
  RankingResult result;
  const std::size_t g = gallery.size();
  std::vector<long> hits_at(g, 0);
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    QueryRanking r;
    r.query = static_cast<int>(q);
    std::vector<std::pair<double, int>> order;
    order.reserve(g);
    for (std::size_t j = 0; j < g; ++j) {
      const bool same_id = gallery.identities[j] == query.identities[q];
      if (same_id && gallery.cameras[j] == query.cameras[q]) continue;
      order.emplace_back(euclidean_distance(query.embeddings[q], gallery.embeddings[j]), static_cast<int>(j));
    }
    std::sort(order.begin(), order.end());
    int relevant = 0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      r.gallery.push_back(order[pos].second);
      r.distances.push_back(order[pos].first);
      if (gallery.identities[order[pos].second] == query.identities[q]) {
        ++relevant;
        precision_sum += static_cast<double>(relevant) / static_cast<double>(pos + 1);
        if (r.first_match < 0) r.first_match = static_cast<int>(pos);
      }
    }
    if (relevant == 0) {
      ++result.skipped;
    } else {
      r.average_precision = precision_sum / relevant;
      ap_sum += r.average_precision;
      ++result.evaluated;
      ++hits_at[r.first_match];
    }
    result.queries.push_back(std::move(r));
  }
  result.cmc.assign(g, 0.0);
  if (result.evaluated > 0) {
    long cumulative = 0;
    for (std::size_t k = 0; k < g; ++k) {
      cumulative += hits_at[k];
      result.cmc[k] = static_cast<double>(cumulative) / result.evaluated;
    }
    result.map = ap_sum / result.evaluated;
  }
  return result;
}

DistanceHistogram distance_histogram(const LabeledEmbeddings& data, int bins) {
  if (data.n_cameras < 2) throw ConfigError("distance histogram needs at least 2 cameras");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  DistanceHistogram h;
  for (int a = 0; a < data.n_cameras; ++a) {
    for (int b = a + 1; b < data.n_cameras; ++b) h.pairs.push_back({a, b, {}, {}});
  }
  auto pair_slot = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    // Row-major offset into the upper triangle.
    return a * data.n_cameras - a * (a + 1) / 2 + (b - a - 1);
  };
  double max_distance = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = i + 1; j < data.size(); ++j) {
      if (data.cameras[i] == data.cameras[j]) continue;
      const double d = euclidean_distance(data.embeddings[i], data.embeddings[j]);
      auto& slot = h.pairs[pair_slot(data.cameras[i], data.cameras[j])];
      (data.identities[i] == data.identities[j] ? slot.same : slot.different).push_back(d);
      max_distance = std::max(max_distance, d);
    }
  }
  const double top = max_distance > 0.0 ? max_distance : 1.0;
  h.edges.resize(bins + 1);
  for (int k = 0; k <= bins; ++k) h.edges[k] = top * k / bins;
  h.same_counts.assign(bins, 0);
  h.different_counts.assign(bins, 0);
  auto bin_of = [&](double d) { return std::min(bins - 1, static_cast<int>(d / top * bins)); };
  for (const auto& p : h.pairs) {
    for (double d : p.same) ++h.same_counts[bin_of(d)];
    for (double d : p.different) ++h.different_counts[bin_of(d)];
  }
  return h;
}

void write_histogram_csv(const DistanceHistogram& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "bin_low,bin_high,same,different\n";
  for (std::size_t k = 0; k + 1 < h.edges.size(); ++k) {
    out << format_double(h.edges[k]) << ',' << format_double(h.edges[k + 1]) << ',' << h.same_counts[k]
        << ',' << h.different_counts[k] << '\n';
  }
}

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const std::vector<Embedding>& rows, std::size_t dim) {
  Matrix m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw ShapeError("embedding lengths differ");
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

ProbeResult domain_probe(const std::vector<Embedding>& train_x, const std::vector<int>& train_y,
                         const std::vector<Embedding>& test_x, const std::vector<int>& test_y,
                         int n_cameras, const ProbeOptions& options) {
  if (n_cameras < 2) throw ConfigError("domain probe needs at least 2 cameras");
  if (train_x.empty() || test_x.empty()) throw ConfigError("domain probe needs train and test samples");
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
    throw ShapeError("probe labels and embeddings differ in length");
  }
  const std::size_t dim = train_x.front().size();
  Matrix x = to_matrix(train_x, dim);
  Matrix xt = to_matrix(test_x, dim);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  xt.rowwise() -= mean;
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
  if (rms > 0.0) {
    x /= rms;
    xt /= rms;
  }
  const auto n = static_cast<double>(x.rows());
  Matrix w = Matrix::Zero(n_cameras, dim);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(n_cameras);
  Matrix target = Matrix::Zero(x.rows(), n_cameras);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (train_y[i] < 0 || train_y[i] >= n_cameras) throw ConfigError("probe camera label out of range");
    target(i, train_y[i]) = 1.0;
  }
  for (int it = 0; it < options.iterations; ++it) {
    Matrix p = x * w.transpose();
    p.rowwise() += b;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double m = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - m).exp();
      p.row(i) /= p.row(i).sum();
    }
    const Matrix diff = (p - target) / n;
    w -= options.learning_rate * (diff.transpose() * x + options.l2 * w);
    b -= options.learning_rate * diff.colwise().sum();
  }
  Matrix logits = xt * w.transpose();
  logits.rowwise() += b;
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    correct += static_cast<int>(best) == test_y[i] ? 1 : 0;
  }
  ProbeResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(logits.rows());
  r.chance = 1.0 / n_cameras;
  r.train_size = static_cast<int>(x.rows());
  r.test_size = static_cast<int>(xt.rows());
  return r;
}

ProbeResult domain_probe(const std::vector<Embedding>& embeddings, const std::vector<int>& cameras,
                         int n_cameras, const ProbeOptions& options) {
  if (n_cameras < 2) throw ConfigError("domain probe needs at least 2 cameras");
  if (embeddings.size() != cameras.size()) throw ShapeError("probe labels and embeddings differ in length");
  Rng rng(options.seed);
  std::vector<Embedding> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (int c = 0; c < n_cameras; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      if (cameras[i] == c) idx.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& xs = k < n_train ? train_x : test_x;
      auto& ys = k < n_train ? train_y : test_y;
      xs.push_back(embeddings[idx[k]]);
      ys.push_back(c);
    }
  }
  return domain_probe(train_x, train_y, test_x, test_y, n_cameras, options);
}

std::vector<std::array<double, 2>> principal_projection(const std::vector<Embedding>& embeddings) {
  std::vector<std::array<double, 2>> out(embeddings.size(), {0.0, 0.0});
  if (embeddings.empty()) return out;
  const std::size_t dim = embeddings.front().size();
  Matrix x = to_matrix(embeddings, dim);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto& vectors = solver.eigenvectors();
  for (int c = 0; c < 2 && c < static_cast<int>(dim); ++c) {
    Eigen::VectorXd v = vectors.col(static_cast<Eigen::Index>(dim) - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    const Eigen::VectorXd coords = x * v;
    for (std::size_t i = 0; i < out.size(); ++i) out[i][c] = coords(static_cast<Eigen::Index>(i));
  }
  return out;
}

FeatureTable feature_table(const Model& model, const Dataset& dataset, bool with_projection) {
  FeatureTable table;
  table.has_identity = dataset.has_ground_truth();
  table.has_projection = with_projection;
  std::vector<Embedding> embeddings;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tracklet& t = dataset.tracklets.tracklets[i];
    FeatureRow row;
    row.camera = t.camera;
    row.pseudo_label = t.pseudo_label;
    if (table.has_identity) row.identity = (*dataset.identities)[i];
    row.embedding = model.embed(t);
    embeddings.push_back(row.embedding);
    table.rows.push_back(std::move(row));
  }
  if (with_projection) {
    const auto proj = principal_projection(embeddings);
    for (std::size_t i = 0; i < proj.size(); ++i) table.rows[i].projection = proj[i];
  }
  return table;
}

void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write feature file " + path.string());
  const std::size_t dim = table.rows.empty() ? 0 : table.rows.front().embedding.size();
  out << "camera,pseudo_label";
  if (table.has_identity) out << ",identity";
  for (std::size_t j = 0; j < dim; ++j) out << ",f" << j;
  if (table.has_projection) out << ",pc1,pc2";
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.camera + 1 << ',';
    if (row.pseudo_label >= 0) out << row.pseudo_label + 1;
    if (table.has_identity) out << ',' << row.identity;
    for (double v : row.embedding) out << ',' << format_double(v);
    if (table.has_projection) out << ',' << format_double(row.projection[0]) << ',' << format_double(row.projection[1]);
    out << '\n';
  }
  if (!out) throw Error("failed writing feature file " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& text, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("feature file: bad value '" + text + "' in column " + column);
  }
  return v;
}

}  // namespace

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read feature file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("feature file " + path.string() + " is empty");
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "camera" || header[1] != "pseudo_label") {
    throw Error("feature file: expected camera,pseudo_label header");
  }
  FeatureTable table;
  table.has_identity = header.size() > 2 && header[2] == "identity";
  table.has_projection = header.size() >= 2 && header.back() == "pc2";
  const std::size_t first_feature = table.has_identity ? 3 : 2;
  const std::size_t end_feature = header.size() - (table.has_projection ? 2 : 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw Error("feature file: row has the wrong number of columns");
    FeatureRow row;
    row.camera = static_cast<int>(parse_cell(cells[0], "camera")) - 1;
    row.pseudo_label = cells[1].empty() ? -1 : static_cast<int>(parse_cell(cells[1], "pseudo_label")) - 1;
    if (table.has_identity) row.identity = cells[2];
    for (std::size_t j = first_feature; j < end_feature; ++j) row.embedding.push_back(parse_cell(cells[j], header[j]));
    if (table.has_projection) {
      row.projection = {parse_cell(cells[end_feature], "pc1"), parse_cell(cells[end_feature + 1], "pc2")};
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_metrics_csv(const RankingResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "rank1,rank5,rank10,rank20,map,queries,skipped\n";
  out << format_double(r.rank(1)) << ',' << format_double(r.rank(5)) << ',' << format_double(r.rank(10)) << ','
      << format_double(r.rank(20)) << ',' << format_double(r.map) << ',' << r.evaluated << ',' << r.skipped << '\n';
}

}  // namespace camalign
