#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>

#include "camalign/eval.hpp"
#include "camalign/experiments.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace camalign {
namespace {

LabeledEmbeddings make_set(int n_cameras, std::vector<Embedding> e, std::vector<int> cams, std::vector<int> ids) {
  LabeledEmbeddings s;
  s.n_cameras = n_cameras;
  s.embeddings = std::move(e);
  s.cameras = std::move(cams);
  for (int id : ids) s.identities.push_back("p" + std::to_string(id));
  return s;
}

TEST(Ranking, HandInstance) {
  const auto q = make_set(2, {{0.0, 0.0}}, {0}, {1});
  const auto g = make_set(2, {{2.0, 0.0}, {1.0, 0.0}, {0.1, 0.0}}, {1, 1, 0}, {1, 2, 1});
  const RankingResult r = rank_queries(q, g);
  ASSERT_EQ(r.queries.size(), 1u);
  EXPECT_EQ(r.queries[0].gallery, (std::vector<int>{1, 0}));
  EXPECT_EQ(r.queries[0].first_match, 1);
  EXPECT_DOUBLE_EQ(r.queries[0].average_precision, 0.5);
  EXPECT_DOUBLE_EQ(r.rank(1), 0.0);
  EXPECT_DOUBLE_EQ(r.rank(2), 1.0);
  EXPECT_DOUBLE_EQ(r.map, 0.5);
}

TEST(Ranking, IdenticalEmbeddingsRankByIndex) {
  const auto g = make_set(2, {{1.0}, {1.0}, {1.0}}, {1, 1, 1}, {7, 3, 3});
  const auto q = make_set(2, {{1.0}}, {0}, {3});
  const RankingResult r = rank_queries(q, g);
  EXPECT_EQ(r.queries[0].first_match, 1);
  EXPECT_DOUBLE_EQ(r.queries[0].average_precision, (1.0 / 2 + 2.0 / 3) / 2);
}

TEST(Ranking, SkipsQueriesWithoutCrossCameraMatch) {
  const auto q = make_set(2, {{0.0}, {1.0}}, {0, 0}, {1, 2});
  const auto g = make_set(2, {{0.0}, {3.0}}, {0, 1}, {1, 2});
  const RankingResult r = rank_queries(q, g);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_EQ(r.evaluated, 1);
  EXPECT_EQ(r.queries[0].first_match, -1);
  EXPECT_EQ(r.queries[1].first_match, 1);
  EXPECT_DOUBLE_EQ(r.rank(1), 0.0);
  EXPECT_DOUBLE_EQ(r.rank(2), 1.0);
}

TEST(Ranking, MatchesEnumerationOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int nq = 1 + static_cast<int>(rng.index(6));
    const int ng = 2 + static_cast<int>(rng.index(10));
    const int dim = 1 + static_cast<int>(rng.index(4));
    const int cams = 2 + static_cast<int>(rng.index(3));
    const int ids = 1 + static_cast<int>(rng.index(5));
    auto draw = [&](int n, std::vector<Embedding>& e, std::vector<int>& c, std::vector<int>& id) {
      for (int i = 0; i < n; ++i) {
        Embedding v(dim);
        // Coarse values so exact distance ties occur.
        for (double& x : v) x = static_cast<double>(rng.index(3));
        e.push_back(v);
        c.push_back(static_cast<int>(rng.index(cams)));
        id.push_back(static_cast<int>(rng.index(ids)));
      }
    };
    std::vector<Embedding> qe, ge;
    std::vector<int> qc, gc, qi, gi;
    draw(nq, qe, qc, qi);
    draw(ng, ge, gc, gi);
    const RankingResult r = rank_queries(make_set(cams, qe, qc, qi), make_set(cams, ge, gc, gi));
    const auto o = oracle::enumerate_metrics(qe, qc, qi, ge, gc, gi);
    EXPECT_EQ(r.skipped, o.skipped);
    EXPECT_NEAR(r.map, o.map, 1e-9);
    for (int k = 1; k <= ng; ++k) EXPECT_NEAR(r.rank(k), o.cmc[k - 1], 1e-9) << "trial " << trial;
    std::vector<int> firsts;
    for (const auto& qr : r.queries) {
      if (qr.first_match >= 0) firsts.push_back(qr.first_match);
    }
    EXPECT_EQ(firsts, o.first_match);
  }
}

TEST(Ranking, CmcIsMonotoneAndReachesOne) {
  Rng rng(14);
  std::vector<Embedding> e;
  std::vector<int> c, id;
  for (int i = 0; i < 40; ++i) {
    e.push_back({rng.normal(), rng.normal(), rng.normal()});
    c.push_back(i % 4);
    id.push_back(i / 4);
  }
  const auto s = make_set(4, e, c, id);
  const RankingResult r = rank_queries(s, s);
  EXPECT_EQ(r.skipped, 0);
  for (std::size_t k = 1; k < r.cmc.size(); ++k) EXPECT_GE(r.cmc[k], r.cmc[k - 1]);
  EXPECT_DOUBLE_EQ(r.cmc.back(), 1.0);
  EXPECT_GT(r.map, 0.0);
  EXPECT_LE(r.map, 1.0);
}

TEST(Ranking, ExcludedItemsDoNotAffectMetrics) {
  Rng rng(15);
  std::vector<Embedding> e;
  std::vector<int> c, id;
  for (int i = 0; i < 20; ++i) {
    e.push_back({rng.normal(), rng.normal()});
    c.push_back(1 + i % 2);
    id.push_back(i % 5);
  }
  const auto q = make_set(3, {{0.0, 0.0}}, {0}, {2});
  const RankingResult before = rank_queries(q, make_set(3, e, c, id));
  // Same camera and identity as the query: always excluded.
  e.push_back({0.0, 0.0});
  c.push_back(0);
  id.push_back(2);
  const RankingResult after = rank_queries(q, make_set(3, e, c, id));
  EXPECT_EQ(before.queries[0].gallery, after.queries[0].gallery);
  EXPECT_DOUBLE_EQ(before.map, after.map);
  EXPECT_EQ(before.queries[0].first_match, after.queries[0].first_match);
}

TEST(Histogram, CoversEveryCameraPair) {
  std::vector<Embedding> e;
  std::vector<int> c, id;
  for (int i = 0; i < 12; ++i) {
    e.push_back({static_cast<double>(i)});
    c.push_back(i % 6);
    id.push_back(i % 3);
  }
  const DistanceHistogram h = distance_histogram(make_set(6, e, c, id), 10);
  EXPECT_EQ(h.pairs.size(), 15u);
  long same = 0, diff = 0, total = 0;
  for (const auto& p : h.pairs) {
    EXPECT_LT(p.camera_a, p.camera_b);
    same += static_cast<long>(p.same.size());
    diff += static_cast<long>(p.different.size());
    total += 4;
  }
  EXPECT_EQ(same + diff, total);
  long counted = 0;
  for (long v : h.same_counts) counted += v;
  for (long v : h.different_counts) counted += v;
  EXPECT_EQ(counted, total);
  EXPECT_EQ(h.edges.size(), 11u);
  EXPECT_DOUBLE_EQ(h.edges.back(), 11.0);
}

TEST(Histogram, IdenticalEmbeddingsFallInFirstBin) {
  const auto s = make_set(2, {{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}, {0, 1, 1}, {1, 1, 2});
  const DistanceHistogram h = distance_histogram(s, 5);
  EXPECT_EQ(h.same_counts[0], 1);
  EXPECT_EQ(h.different_counts[0], 1);
}

TEST(Histogram, TwoPointDistance) {
  const auto s = make_set(2, {{0.0, 0.0}, {3.0, 4.0}}, {0, 1}, {1, 1});
  const DistanceHistogram h = distance_histogram(s, 4);
  ASSERT_EQ(h.pairs.size(), 1u);
  EXPECT_EQ(h.pairs[0].same, (std::vector<double>{5.0}));
  EXPECT_EQ(h.same_counts.back(), 1);
  EXPECT_THROW(distance_histogram(make_set(1, {{0.0}}, {0}, {1}), 4), ConfigError);
}

TEST(Probe, RandomEmbeddingsScoreNearChance) {
  Rng rng(16);
  std::vector<Embedding> e;
  std::vector<int> c;
  for (int i = 0; i < 800; ++i) {
    e.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    c.push_back(i % 4);
  }
  const ProbeResult p = domain_probe(e, c, 4);
  EXPECT_DOUBLE_EQ(p.chance, 0.25);
  EXPECT_EQ(p.train_size + p.test_size, 800);
  const double sigma = std::sqrt(0.25 * 0.75 / p.test_size);
  EXPECT_NEAR(p.accuracy, 0.25, 3.0 * sigma);
}

TEST(Probe, SeparableEmbeddingsScorePerfect) {
  std::vector<Embedding> e;
  std::vector<int> c;
  for (int i = 0; i < 60; ++i) {
    Embedding v(3, 0.0);
    v[i % 3] = 1.0;
    e.push_back(v);
    c.push_back(i % 3);
  }
  EXPECT_DOUBLE_EQ(domain_probe(e, c, 3).accuracy, 1.0);
  EXPECT_THROW(domain_probe(e, std::vector<int>(60, 0), 1), ConfigError);
}

TEST(Probe, InvariantToRotation) {
  Rng rng(17);
  std::vector<Embedding> e;
  std::vector<int> c;
  for (int i = 0; i < 200; ++i) {
    const int cam = i % 2;
    e.push_back({rng.normal() + 0.7 * cam, rng.normal(), rng.normal() - 0.4 * cam});
    c.push_back(cam);
  }
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m.data()[i] = rng.normal();
  const Eigen::Matrix3d rot = Eigen::HouseholderQR<Eigen::Matrix3d>(m).householderQ();
  std::vector<Embedding> rotated;
  for (const auto& v : e) {
    const Eigen::Vector3d r = rot * Eigen::Vector3d(v[0], v[1], v[2]);
    rotated.push_back({r[0], r[1], r[2]});
  }
  const ProbeResult a = domain_probe(e, c, 2);
  const ProbeResult b = domain_probe(rotated, c, 2);
  EXPECT_NEAR(a.accuracy, b.accuracy, 1.0 / a.test_size + 1e-12);
  EXPECT_GT(a.accuracy, 0.6);
}

TEST(Projection, CenteredWithFixedSign) {
  Rng rng(18);
  std::vector<Embedding> e;
  for (int i = 0; i < 50; ++i) e.push_back({3.0 * rng.normal() + 5.0, rng.normal(), 0.1 * rng.normal()});
  const auto p = principal_projection(e);
  ASSERT_EQ(p.size(), 50u);
  double m0 = 0.0, m1 = 0.0, v0 = 0.0, v1 = 0.0;
  for (const auto& x : p) {
    m0 += x[0] / 50;
    m1 += x[1] / 50;
  }
  for (const auto& x : p) {
    v0 += x[0] * x[0];
    v1 += x[1] * x[1];
  }
  EXPECT_NEAR(m0, 0.0, 1e-9);
  EXPECT_NEAR(m1, 0.0, 1e-9);
  EXPECT_GT(v0, v1);
  std::vector<Embedding> flipped;
  for (const auto& v : e) flipped.push_back({-v[0], -v[1], -v[2]});
  const auto q = principal_projection(flipped);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q[i][0], -p[i][0], 1e-9);
}

Benchmark tiny_benchmark() {
  SynthConfig s;
  s.n_cameras = 2;
  s.n_identities = 6;
  s.frames_per_tracklet = 2;
  s.height = 16;
  s.width = 8;
  return make_synthetic_benchmark(s, 4);
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.backbone.channels = {4, 4};
  c.adversarial.discriminator.hidden1 = 3;
  c.adversarial.discriminator.hidden2 = 3;
  c.batch_size = 2;
  c.frames_per_sample = 1;
  c.steps = 2;
  return c;
}

TEST(FeatureExport, RoundTripsEmbeddingsAndProjection) {
  testing::TempDir dir("features");
  const Benchmark b = tiny_benchmark();
  Dataset train = b.train;
  assign_pseudo_labels(train.tracklets, 1, false);
  const TrainConfig c = tiny_train();
  const Model model(c.model_config(train.tracklets.label_counts()), 1);
  const FeatureTable t = feature_table(model, train, true);
  ASSERT_EQ(t.rows.size(), train.size());
  EXPECT_TRUE(t.has_identity);
  double pc = 0.0;
  for (const auto& r : t.rows) pc += r.projection[0];
  EXPECT_NEAR(pc, 0.0, 1e-9);
  write_feature_csv(t, dir / "f.csv");
  const FeatureTable back = read_feature_csv(dir / "f.csv");
  ASSERT_EQ(back.rows.size(), t.rows.size());
  EXPECT_TRUE(back.has_projection);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].camera, t.rows[i].camera);
    EXPECT_EQ(back.rows[i].identity, t.rows[i].identity);
    EXPECT_NEAR(euclidean_distance(back.rows[i].embedding, t.rows[0].embedding),
                euclidean_distance(t.rows[i].embedding, t.rows[0].embedding), 1e-9);
  }
}

TEST(Experiments, AblationHasOneCellPerConfiguration) {
  const auto cells = ablation_cells(tiny_train(), {1, 2, 3, 4, 5});
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[0].name, "L_id");
  EXPECT_EQ(cells[0].train.adversarial.variant, Variant::none);
  EXPECT_EQ(cells[7].name, "L_id+L_mp(K=5)");
  EXPECT_EQ(cells[7].train.adversarial.parts, 5);
  EXPECT_EQ(robustness_cells(tiny_train(), {0, 10, 30, 50}).size(), 8u);
  EXPECT_EQ(nested_groupings(4).size(), 3u);
  EXPECT_EQ(grouping_cells(tiny_train(), nested_groupings(4))[1].name, "2-domains x 2");
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0}), 2.5);
}

TEST(Experiments, RepeatedSeedsGiveIdenticalTables) {
  testing::TempDir dir("ablation");
  const Benchmark b = tiny_benchmark();
  ExperimentOptions opt;
  opt.seeds = {3, 4};
  const auto cells = ablation_cells(tiny_train(), {1});
  write_table_csv(run_grid(b, cells, opt), dir / "a.csv");
  write_table_csv(run_grid(b, cells, opt), dir / "b.csv");
  const auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  EXPECT_EQ(read(dir / "a.csv"), read(dir / "b.csv"));
}

TEST(Experiments, ZeroRateMatchesUnperturbedRun) {
  const Benchmark b = tiny_benchmark();
  ExperimentOptions opt;
  CellSpec plain{"plain", tiny_train(), 0.0};
  plain.train.adversarial.variant = Variant::none;
  const CellSpec zero = robustness_cells(tiny_train(), {0.0})[0];
  const CellResult x = run_cell(b, plain, 2, opt);
  const CellResult y = run_cell(b, zero, 2, opt);
  EXPECT_EQ(x.rank1, y.rank1);
  EXPECT_EQ(x.map, y.map);
}

}  // namespace
}  // namespace camalign
