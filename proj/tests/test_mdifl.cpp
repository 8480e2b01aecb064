#include <gtest/gtest.h>

#include <cmath>

#include "camalign/config.hpp"
#include "camalign/mdifl.hpp"
#include "support/oracles.hpp"

namespace camalign {
namespace {

DiscriminatorConfig small_disc() {
  DiscriminatorConfig c;
  c.hidden1 = 5;
  c.hidden2 = 4;
  return c;
}

DomainDiscriminator make_disc(int in, int domains, std::uint64_t seed) {
  Rng rng(seed);
  return DomainDiscriminator(in, domains, small_disc(), "d", rng);
}

/// Output layer silenced: every pixel gives equal logits.
void make_uniform(DomainDiscriminator& d) {
  std::fill(d.conv3.weight.value.begin(), d.conv3.weight.value.end(), 0.0);
  std::fill(d.conv3.bias.value.begin(), d.conv3.bias.value.end(), 0.0);
}

bool all_zero(const std::vector<Param*>& params) {
  for (const Param* p : params) {
    for (double g : p->grad) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

TEST(GradientReversal, ForwardIsIdentityBackwardNegates) {
  Rng rng(1);
  const Tensor3 x = oracle::random_tensor(3, 2, 4, rng);
  const Tensor3 g = oracle::random_tensor(3, 2, 4, rng);
  const GradientReversal grl;
  EXPECT_EQ(grl.forward(x), x);
  const Tensor3 back = grl.backward(g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back.values()[i], -g.values()[i]);
  const Tensor3 off = GradientReversal(0.0).backward(g);
  for (double v : off.values()) EXPECT_EQ(v, 0.0);
  Tensor3 accum(3, 2, 4, 1.0);
  GradientReversal(0.5).backward_into(g, accum);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(accum.values()[i], 1.0 - 0.5 * g.values()[i]);
}

TEST(GradientReversal, ScalarChainMatchesReversalContract) {
  // y = w * grl(w): the reversed path contributes -coef * dy/d(second factor).
  for (double coef : {1.0, 0.5, 2.0}) {
    for (double w : {-1.3, 0.2, 2.5}) {
      const GradientReversal grl(coef);
      Tensor3 in(1, 1, 1, w);
      const double second = grl.forward(in)(0, 0, 0);
      Tensor3 upstream(1, 1, 1, w);  // dy/d(second) = first factor
      const double analytic = second + grl.backward(upstream)(0, 0, 0);
      const double h = 1e-4;
      auto y = [](double a, double b) { return a * b; };
      const double d_first = (y(w + h, w) - y(w - h, w)) / (2 * h);
      const double d_second = (y(w, w + h) - y(w, w - h)) / (2 * h);
      const double expected = d_first - coef * d_second;
      EXPECT_LE(std::abs(analytic - expected), 1e-3 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(PairwiseBank, SymmetricHandlesShareParameters) {
  Rng rng(2);
  PairwiseDiscriminatorBank bank(4, 3, small_disc(), "b", rng);
  EXPECT_EQ(bank.size(), 6u);
  for (int u = 0; u < 4; ++u) {
    for (int v = 0; v < 4; ++v) {
      if (u != v) {
        EXPECT_EQ(&bank.at(u, v), &bank.at(v, u));
      }
    }
  }
  bank.at(1, 3).conv1.weight.value[0] = 42.0;
  EXPECT_EQ(bank.at(3, 1).conv1.weight.value[0], 42.0);
  EXPECT_THROW(bank.at(2, 2), ShapeError);
  EXPECT_THROW(bank.at(0, 4), ShapeError);
}

TEST(PairwiseLoss, SingleCameraGivesZero) {
  Rng rng(3);
  PairwiseDiscriminatorBank bank(1, 3, small_disc(), "b", rng);
  EXPECT_EQ(bank.size(), 0u);
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  EXPECT_EQ(pairwise_adv_loss(x, 0, bank), 0.0);
}

TEST(PairwiseLoss, OnlyPairsWithTheSampleCameraContribute) {
  Rng rng(4);
  PairwiseDiscriminatorBank bank(3, 3, small_disc(), "b", rng);
  const Tensor3 x = oracle::random_tensor(3, 2, 3, rng);
  for (Param* p : bank.params()) p->zero_grad();
  double loss = 0.0;
  pairwise_adv_loss_backward(x, 0, bank, 1.0, &loss);
  EXPECT_FALSE(all_zero(bank.at(0, 1).params()));
  EXPECT_FALSE(all_zero(bank.at(0, 2).params()));
  EXPECT_TRUE(all_zero(bank.at(1, 2).params()));
  EXPECT_NEAR(loss, pairwise_adv_loss(x, 0, bank), 1e-12);
}

TEST(PairwiseLoss, TwoEvenDiscriminatorsGiveTwoLogTwo) {
  Rng rng(5);
  PairwiseDiscriminatorBank bank(3, 3, small_disc(), "b", rng);
  make_uniform(bank.at(0, 1));
  make_uniform(bank.at(0, 2));
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  EXPECT_NEAR(pairwise_adv_loss(x, 0, bank), 1.3862943611198906, 1e-12);
}

TEST(PairwiseLoss, MatchesLoopOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int cameras = 2 + static_cast<int>(rng.index(4));
    PairwiseDiscriminatorBank bank(cameras, 3, small_disc(), "b", rng);
    const Tensor3 x = oracle::random_tensor(1 + static_cast<int>(rng.index(4)), 1 + static_cast<int>(rng.index(3)), 3, rng);
    const int camera = static_cast<int>(rng.index(cameras));
    EXPECT_NEAR(pairwise_adv_loss(x, camera, bank), oracle::pairwise_loss(bank, x, camera), 1e-9);
  }
}

TEST(MultidomainLoss, CertainTrueDomainGivesZero) {
  DomainDiscriminator d = make_disc(3, 4, 7);
  make_uniform(d);
  std::fill(d.conv3.bias.value.begin(), d.conv3.bias.value.end(), -1000.0);
  d.conv3.bias.value[1] = 0.0;
  Rng rng(7);
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  EXPECT_EQ(multidomain_adv_loss(x, domain_one_hot(1, 4), d), 0.0);
}

TEST(MultidomainLoss, UniformOverSixDomains) {
  DomainDiscriminator d = make_disc(3, 6, 8);
  make_uniform(d);
  Rng rng(8);
  const Tensor3 x = oracle::random_tensor(4, 2, 3, rng);
  EXPECT_NEAR(multidomain_adv_loss(x, domain_one_hot(3, 6), d), 1.791759469228055, 1e-12);
}

TEST(MultidomainLoss, MatchesLoopOracleAndRejectsBadLabel) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int domains = 1 + static_cast<int>(rng.index(6));
    const int channels = 1 + static_cast<int>(rng.index(4));
    DomainDiscriminator d = make_disc(channels, domains, 300 + trial);
    const Tensor3 x = oracle::random_tensor(1 + static_cast<int>(rng.index(4)), 1 + static_cast<int>(rng.index(4)), channels, rng);
    const auto label = domain_one_hot(static_cast<int>(rng.index(domains)), domains);
    EXPECT_NEAR(multidomain_adv_loss(x, label, d), oracle::multidomain_loss(d, x, label), 1e-9);
  }
  DomainDiscriminator d = make_disc(2, 3, 1);
  const Tensor3 x(2, 2, 2, 0.1);
  EXPECT_THROW(multidomain_adv_loss(x, domain_one_hot(0, 4), d), ShapeError);
}

TEST(ImageLevelLoss, BackwardReportsSameLoss) {
  DomainDiscriminator d = make_disc(3, 4, 10);
  Rng rng(10);
  const Tensor3 x = oracle::random_tensor(3, 2, 3, rng);
  double loss = 0.0;
  image_level_loss_backward(d, x, 2, 1.0, &loss);
  EXPECT_NEAR(loss, image_level_loss(d, x, 2), 1e-12);
  const auto p = image_level_probabilities(d, x);
  EXPECT_NEAR(-std::log(p[2]), loss, 1e-12);
}

TEST(CameraGrouping, ValidatesPartitions) {
  EXPECT_NO_THROW(CameraGrouping(6, parse_groups("[[1,2],[3,4],[5,6]]")));
  const CameraGrouping g(6, parse_groups("[[1,2],[3,4],[5,6]]"));
  EXPECT_EQ(g.group_count(), 3);
  EXPECT_EQ(g.group_of(3), 1);
  EXPECT_EQ(g.local_index(3), 1);
  EXPECT_EQ(g.to_string(), "[[1,2],[3,4],[5,6]]");
  EXPECT_THROW(CameraGrouping(4, {{0, 1}, {1, 2, 3}}), ConfigError);
  EXPECT_THROW(CameraGrouping(4, {{0, 1}, {2}}), ConfigError);
  EXPECT_THROW(CameraGrouping(4, {{0, 1}, {2, 4}}), ConfigError);
  EXPECT_THROW(CameraGrouping(4, {{0, 1, 2, 3}, {}}), ConfigError);
}

TEST(GroupedLoss, SingleGroupEqualsMultidomain) {
  Rng rng(11);
  std::vector<DomainDiscriminator> one{make_disc(3, 6, 12)};
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  const auto all = CameraGrouping::all(6);
  for (int camera = 0; camera < 6; ++camera) {
    EXPECT_EQ(grouped_multidomain_loss(x, camera, all, one),
              multidomain_adv_loss(x, domain_one_hot(camera, 6), one[0]));
  }
}

TEST(GroupedLoss, OnlyTheCameraGroupContributes) {
  Rng rng(12);
  const CameraGrouping g(6, parse_groups("[[1,2],[3,4],[5,6]]"));
  std::vector<DomainDiscriminator> discs{make_disc(3, 2, 13), make_disc(3, 2, 14), make_disc(3, 2, 15)};
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  EXPECT_EQ(grouped_multidomain_loss(x, 3, g, discs), multidomain_adv_loss(x, domain_one_hot(1, 2), discs[1]));
  EXPECT_THROW(grouped_multidomain_loss(x, 3, g, std::span(discs).first(2)), ShapeError);
}

TEST(GroupedLoss, SingletonGroupsGiveZero) {
  Rng rng(13);
  const auto g = CameraGrouping::singletons(4);
  std::vector<DomainDiscriminator> discs;
  for (int i = 0; i < 4; ++i) discs.push_back(make_disc(3, 1, 20 + i));
  const Tensor3 x = oracle::random_tensor(2, 2, 3, rng);
  for (int camera = 0; camera < 4; ++camera) EXPECT_EQ(grouped_multidomain_loss(x, camera, g, discs), 0.0);
}

TEST(DiscriminatorCount, MatchesVariantFormulas) {
  EXPECT_EQ(discriminator_count(Variant::pairwise, 6, 3), 15u);
  EXPECT_EQ(discriminator_count(Variant::pairwise, 3, 3), 3u);
  for (int n : {1, 2, 6, 10}) EXPECT_EQ(discriminator_count(Variant::single, n, 3), 1u);
  EXPECT_EQ(discriminator_count(Variant::single_pam, 6, 4), 4u);
  EXPECT_EQ(discriminator_count(Variant::pairwise_pam, 6, 3), 45u);
  EXPECT_EQ(discriminator_count(Variant::none, 6, 3), 0u);
}

TEST(Variant, ParsesAndPrints) {
  for (Variant v : {Variant::none, Variant::pairwise, Variant::single, Variant::single_pam, Variant::pairwise_pam}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("double"), ConfigError);
}

TEST(ReversalSign, DiscriminatorDescendsWhileFeatureAscends) {
  // Feature map x(a) = a * base. The discriminator gradient follows +dL, the
  // feature parameter a receives -dL/da through the reversal layer.
  Rng rng(14);
  DomainDiscriminator d = make_disc(3, 3, 16);
  const Tensor3 base = oracle::random_tensor(3, 2, 3, rng);
  const double a = 0.8;
  auto x_of = [&](double s) {
    Tensor3 x = base;
    x *= s;
    return x;
  };
  for (Param* p : d.params()) p->zero_grad();
  const Tensor3 dx = image_level_loss_backward(d, x_of(a), 1, 1.0, nullptr);
  Tensor3 grad_x(3, 2, 3);
  GradientReversal().backward_into(dx, grad_x);
  double grad_a = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) grad_a += grad_x.values()[i] * base.values()[i];

  const double h = 1e-4;
  const double numeric_a = (image_level_loss(d, x_of(a + h), 1) - image_level_loss(d, x_of(a - h), 1)) / (2 * h);
  EXPECT_NEAR(grad_a, -numeric_a, 1e-6 * std::max(1.0, std::abs(numeric_a)));
  EXPECT_LT(grad_a * numeric_a, 0.0);

  Param& w = d.conv3.bias;
  const double saved = w.value[1];
  w.value[1] = saved + h;
  const double up = image_level_loss(d, x_of(a), 1);
  w.value[1] = saved - h;
  const double down = image_level_loss(d, x_of(a), 1);
  w.value[1] = saved;
  const double numeric_w = (up - down) / (2 * h);
  EXPECT_NEAR(w.grad[1], numeric_w, 1e-6);
  EXPECT_GT(w.grad[1] * numeric_w, 0.0);
}

}  // namespace
}  // namespace camalign
