#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "camalign/backbone.hpp"
#include "support/oracles.hpp"

namespace camalign {
namespace {

Backbone make_backbone(std::vector<int> channels, std::uint64_t seed = 1) {
  Rng rng(seed);
  BackboneConfig config;
  config.channels = std::move(channels);
  return Backbone(config, rng);
}

std::vector<Image> random_frames(int count, int height, int width, Rng& rng) {
  std::vector<Image> frames;
  for (int i = 0; i < count; ++i) {
    Image img(height, width, 3);
    for (double& v : img.values()) v = rng.uniform();
    frames.push_back(img);
  }
  return frames;
}

std::vector<const Image*> pointers(const std::vector<Image>& frames) {
  std::vector<const Image*> out;
  for (const auto& f : frames) out.push_back(&f);
  return out;
}

TEST(Backbone, FourStridedStagesMap64x32To4x2) {
  const Backbone b = make_backbone({4, 6, 6, 5});
  Rng rng(2);
  const auto frames = random_frames(1, 64, 32, rng);
  const FeatureMap fm = b.extract_feature_map(pointers(frames), nullptr);
  EXPECT_EQ(fm.height(), 4);
  EXPECT_EQ(fm.width(), 2);
  EXPECT_EQ(fm.channels(), 5);
  EXPECT_EQ(b.output_shape(64, 32), std::make_pair(4, 2));
}

TEST(Backbone, ConvolutionMatchesDirectLoops) {
  const Backbone b = make_backbone({3, 4});
  Rng rng(3);
  const auto frames = random_frames(1, 9, 7, rng);
  FrameCache cache;
  const FeatureMap fm = b.forward_frame(frames[0], &cache);
  const auto params = b.params();
  Conv2d c1(3, 3, 2, "c1");
  Conv2d c2(3, 4, 2, "c2");
  c1.weight.value = params[0]->value;
  c1.bias.value = params[1]->value;
  c2.weight.value = params[2]->value;
  c2.bias.value = params[3]->value;
  Tensor3 a = oracle::conv3x3(frames[0], c1);
  for (double& v : a.values()) v = std::max(v, 0.0);
  Tensor3 z = oracle::conv3x3(a, c2);
  for (double& v : z.values()) v = std::max(v, 0.0);
  ASSERT_TRUE(z.same_shape(fm));
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z.values()[i], fm.values()[i], 1e-12);
}

TEST(Backbone, IdenticalFramesGiveSingleFrameMap) {
  const Backbone b = make_backbone({4, 4});
  Rng rng(4);
  const auto one = random_frames(1, 16, 8, rng);
  const std::vector<Image> three(3, one[0]);
  const FeatureMap single = b.forward_frame(one[0], nullptr);
  const FeatureMap pooled = b.extract_feature_map(pointers(three), nullptr);
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(single.values()[i], pooled.values()[i], 1e-15);
}

TEST(Backbone, FrameOrderAndDuplicationDoNotMatter) {
  const Backbone b = make_backbone({4, 4});
  Rng rng(5);
  const auto frames = random_frames(4, 16, 8, rng);
  std::vector<Image> reversed(frames.rbegin(), frames.rend());
  std::vector<Image> doubled = frames;
  doubled.insert(doubled.end(), frames.begin(), frames.end());
  const FeatureMap a = b.extract_feature_map(pointers(frames), nullptr);
  const FeatureMap r = b.extract_feature_map(pointers(reversed), nullptr);
  const FeatureMap d = b.extract_feature_map(pointers(doubled), nullptr);
  EXPECT_EQ(a, r);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], d.values()[i], 1e-15);
}

TEST(Backbone, RejectsFramesBelowMinimum) {
  const Backbone b = make_backbone({4, 4, 4});
  EXPECT_EQ(b.min_input_extent(), 8);
  const Image small(4, 8, 3, 0.5);
  try {
    b.forward_frame(small, nullptr);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos) << e.what();
  }
}

TEST(PoolToEmbedding, ConstantMapGivesConstantVector) {
  const FeatureMap fm(3, 2, 5, 0.75);
  const Embedding e = pool_to_embedding(fm);
  ASSERT_EQ(e.size(), 5u);
  for (double v : e) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(PoolToEmbedding, TwoRowsAverage) {
  FeatureMap fm(2, 1, 3);
  const double u[3] = {1.0, -2.0, 0.5};
  const double w[3] = {3.0, 4.0, -0.5};
  for (int c = 0; c < 3; ++c) {
    fm(0, 0, c) = u[c];
    fm(1, 0, c) = w[c];
  }
  const Embedding e = pool_to_embedding(fm);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(e[c], (u[c] + w[c]) / 2.0);
}

CameraClassifier make_classifier(int dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  return CameraClassifier(dim, classes, "g", rng);
}

TEST(IdLoss, CertainTrueClassGivesZero) {
  CameraClassifier g = make_classifier(3, 4, 1);
  std::fill(g.weight.value.begin(), g.weight.value.end(), 0.0);
  std::fill(g.bias.value.begin(), g.bias.value.end(), -1000.0);
  g.bias.value[2] = 0.0;
  const std::vector<double> e{0.1, 0.2, 0.3};
  EXPECT_EQ(id_loss(g, e, 2), 0.0);
}

TEST(IdLoss, UniformOverFourClasses) {
  CameraClassifier g = make_classifier(3, 4, 1);
  std::fill(g.weight.value.begin(), g.weight.value.end(), 0.0);
  std::fill(g.bias.value.begin(), g.bias.value.end(), 0.0);
  const std::vector<double> e{0.1, 0.2, 0.3};
  EXPECT_NEAR(id_loss(g, e, 1), 0.34657359027997264, 1e-12);
  EXPECT_NEAR(id_loss(g, e, 1, false), std::log(4.0), 1e-12);
}

TEST(IdLoss, MatchesLoopOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng.index(6));
    const int classes = 1 + static_cast<int>(rng.index(7));
    CameraClassifier g = make_classifier(dim, classes, 100 + trial);
    for (double& b : g.bias.value) b = rng.normal();
    std::vector<double> e(dim);
    for (double& v : e) v = 2.0 * rng.normal();
    const int label = static_cast<int>(rng.index(classes));
    EXPECT_NEAR(id_loss(g, e, label), oracle::id_loss(g, e, label, true), 1e-12);
    EXPECT_NEAR(id_loss(g, e, label, false), oracle::id_loss(g, e, label, false), 1e-12);
  }
}

TEST(IdLoss, OneHotFormAndLengthCheck) {
  CameraClassifier g = make_classifier(2, 3, 4);
  const std::vector<double> e{0.4, -0.3};
  const std::vector<double> onehot{0.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(id_loss(g, e, std::span<const double>(onehot)), id_loss(g, e, 1));
  const std::vector<double> wrong{0.0, 1.0};
  EXPECT_THROW(id_loss(g, e, std::span<const double>(wrong)), ShapeError);
  EXPECT_THROW(id_loss(g, e, 3), ShapeError);
}

TEST(IdLoss, NonNegativeAndProbabilitiesSumToOne) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    CameraClassifier g = make_classifier(4, 5, 200 + trial);
    std::vector<double> e(4);
    for (double& v : e) v = 3.0 * rng.normal();
    const auto p = g.probabilities(e);
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (int label = 0; label < 5; ++label) EXPECT_GE(id_loss(g, e, label), 0.0);
  }
}

TEST(IdLoss, PermutingLabelsAndClassifierRowsIsExact) {
  Rng rng(9);
  const int dim = 6;
  const int classes = 7;
  CameraClassifier g = make_classifier(dim, classes, 10);
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span(perm));
  CameraClassifier h = g;
  for (int j = 0; j < classes; ++j) {
    for (int c = 0; c < dim; ++c) h.weight.value[perm[j] * dim + c] = g.weight.value[j * dim + c];
    h.bias.value[perm[j]] = g.bias.value[j];
  }
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> e(dim);
    for (double& v : e) v = rng.normal();
    const int label = static_cast<int>(rng.index(classes));
    EXPECT_EQ(id_loss(g, e, label), id_loss(h, e, perm[label]));
  }
}

TEST(IdLoss, BackboneGradientMatchesFiniteDifferences) {
  Backbone b = make_backbone({3, 4}, 11);
  CameraClassifier g = make_classifier(4, 3, 12);
  Rng rng(13);
  const auto frames = random_frames(2, 8, 8, rng);
  const auto ptrs = pointers(frames);
  auto loss_at = [&]() { return id_loss(g, pool_to_embedding(b.extract_feature_map(ptrs, nullptr)), 1); };

  for (Param* p : b.params()) p->zero_grad();
  TrackletCache cache;
  const FeatureMap fm = b.extract_feature_map(ptrs, &cache);
  const Embedding e = pool_to_embedding(fm);
  const auto de = id_loss_backward(g, e, 1, true, 1.0, nullptr);
  b.backward(pool_backward(de, fm.height(), fm.width()), cache);

  // Two probe parameters: one first-stage weight and one last-stage bias.
  const auto params = b.params();
  const std::pair<Param*, std::size_t> probes[] = {{params[0], 5}, {params[3], 2}};
  for (const auto& [param, index] : probes) {
    const double saved = param->value[index];
    const double h = 1e-4;
    param->value[index] = saved + h;
    const double up = loss_at();
    param->value[index] = saved - h;
    const double down = loss_at();
    param->value[index] = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = param->grad[index];
    EXPECT_LE(std::abs(analytic - numeric), 1e-3 * std::max(std::abs(numeric), 1e-6))
        << param->name << "[" << index << "] analytic " << analytic << " numeric " << numeric;
  }
}

}  // namespace
}  // namespace camalign
