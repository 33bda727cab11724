#include <gtest/gtest.h>

#include <cmath>

#include "bdrlab/balance.hpp"
#include "bdrlab/error.hpp"

using namespace bdrlab;

TEST(Priors, ProportionalToCounts) {
  const std::vector<std::size_t> counts{30, 10};
  const auto psi = class_priors(counts);
  EXPECT_DOUBLE_EQ(psi[0], 0.75);
  EXPECT_DOUBLE_EQ(psi[1], 0.25);
  EXPECT_THROW(class_priors(std::vector<std::size_t>{3, 0}), ArgumentError);
}

TEST(Compensation, InverseVarianceNormalized) {
  const auto w = compensation(std::vector<double>{0.5, 2.0});
  EXPECT_NEAR(w[0], 0.8, 1e-15);
  EXPECT_NEAR(w[1], 0.2, 1e-15);
}

TEST(Compensation, FloorsZeroVariance) {
  const auto w = compensation(std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(w[0], 1e8 / (1e8 + 1.0), 1e-15);
  EXPECT_THROW(compensation(std::vector<double>{0.0, 0.0}), NumericError);
}

TEST(ScalarVariance, AveragesOverDimensions) {
  const std::vector<std::vector<double>> f{{0.0, 0.0}, {0.0, 4.0}};
  EXPECT_DOUBLE_EQ(scalar_variance(f, std::vector<double>{0.0, 2.0}), 2.0);
}

namespace {

// Class 0: (0,0), (2,0): mean (1,0), variance 0.5.
// Class 1: (0,0), (0,4): mean (0,2), variance 2.
ClassStats example_stats() {
  const Tensor f = Tensor::matrix({{0, 0}, {2, 0}, {0, 0}, {0, 4}});
  return init_class_stats(f, std::vector<std::size_t>{0, 0, 1, 1}, 2);
}

}  // namespace

TEST(Schedule, InitialMix) {
  const ClassStats stats = example_stats();
  EXPECT_NEAR(stats.omega[0], 0.8, 1e-15);
  const OffsetSchedule s = init_schedule(std::vector<double>{0.75, 0.25}, stats.omega, BdrHyper{});
  EXPECT_NEAR(s.pi_init[0], 0.76, 1e-15);
  EXPECT_NEAR(s.pi_init[1], 0.24, 1e-15);
  EXPECT_EQ(s.pi_hat, s.pi_init);
}

TEST(Schedule, MomentumStepHandWorked) {
  // One class-0 sample at (4,0): mean -> (2,0), variance (2*0.5 + 2) / 3 = 1,
  // omega -> (2/3, 1/3), pi' -> (0.7333.., 0.2666..),
  // pi_hat = 0.99 pi_init + 0.01 pi' = (0.759733.., 0.240266..).
  ClassStats stats = example_stats();
  OffsetSchedule s = init_schedule(std::vector<double>{0.75, 0.25}, stats.omega, BdrHyper{});
  momentum_update(stats, s, Tensor::matrix({{4, 0}}), std::vector<std::size_t>{0});
  EXPECT_NEAR(stats.means[0][0], 2.0, 1e-15);
  EXPECT_NEAR(stats.variances[0], 1.0, 1e-15);
  EXPECT_NEAR(stats.variances[1], 2.0, 1e-15);
  EXPECT_NEAR(s.pi_hat[0], 0.7597333333333334, 1e-15);
  EXPECT_NEAR(s.pi_hat[1], 0.24026666666666666, 1e-15);
  const auto off = offsets(s);
  EXPECT_NEAR(off[0], -0.27478778446654817, 1e-14);
  EXPECT_NEAR(off[1], -1.4260058613561186, 1e-14);
}

TEST(Schedule, EmptyBatchLeavesStateUntouched) {
  ClassStats stats = example_stats();
  OffsetSchedule s = init_schedule(std::vector<double>{0.75, 0.25}, stats.omega, BdrHyper{});
  const auto before = s.pi_hat;
  momentum_update(stats, s, Tensor::zeros({0, 2}), std::vector<std::size_t>{});
  EXPECT_EQ(s.pi_hat, before);
}

TEST(Schedule, BetaOneFreezesOffsets) {
  ClassStats stats = example_stats();
  BdrHyper h;
  h.beta = 1.0;
  OffsetSchedule s = init_schedule(std::vector<double>{0.75, 0.25}, stats.omega, h);
  momentum_update(stats, s, Tensor::matrix({{9, 9}, {-3, 1}}), std::vector<std::size_t>{0, 1});
  EXPECT_EQ(s.pi_hat, s.pi_init);
}

TEST(Hyper, RangesValidated) {
  BdrHyper h;
  h.m = 1.5;
  EXPECT_THROW(h.validate(), ArgumentError);
  h = BdrHyper{};
  h.tau = -1.0;
  EXPECT_THROW(h.validate(), ArgumentError);
}

TEST(Losses, ConstantRebalancingAndReweighting) {
  Tape tape;
  const Var z = tape.constant(Tensor::zeros({1, 2}));
  const std::vector<double> psi{0.75, 0.25};
  // softmax(ln psi)[1] = 0.25.
  EXPECT_NEAR(bal_ce_loss(z, std::vector<std::size_t>{1}, psi).item(), -std::log(0.25), 1e-15);
  // Weight of class 1 is 1 / (2 * 0.25) = 2; CE at zero logits is ln 2.
  EXPECT_NEAR(reweight_loss(z, std::vector<std::size_t>{1}, psi).item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(Lemma1, SkewedPriorSeparatesPlainRisk) {
  const Lemma1Result r = lemma1_oracle({{0.4, 0.6}, {0.6, 0.4}}, std::vector<double>{0.95, 0.05});
  EXPECT_TRUE(r.equivalent);
  EXPECT_FALSE(r.unadjusted_equivalent);
  EXPECT_EQ(r.balanced, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(r.unadjusted[0], 0u);
}

TEST(Lemma1, UniformPriorsMakeBothAgree) {
  const Lemma1Result r = lemma1_oracle({{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}}, std::vector<double>{0.5, 0.5});
  EXPECT_TRUE(r.equivalent);
  EXPECT_TRUE(r.unadjusted_equivalent);
}

TEST(Lemma1, DomainLimits) {
  EXPECT_THROW(lemma1_oracle(std::vector<std::vector<double>>(6, std::vector<double>{1.0}),
                             std::vector<double>(6, 1.0 / 6.0)),
               ArgumentError);
}
