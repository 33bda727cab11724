#include <gtest/gtest.h>

#include "bdrlab/diagnostics.hpp"
#include "bdrlab/error.hpp"

using namespace bdrlab;

TEST(Fmax, PeakMinusStart) {
  const std::vector<double> trace{1.0, 1.5, 3.0, 2.0, 0.5};
  const auto p = f_max(trace);
  EXPECT_DOUBLE_EQ(p.value, 2.0);
  EXPECT_EQ(p.step, 2u);
  EXPECT_DOUBLE_EQ(f_max(std::vector<double>{2.0, 1.0}).value, 0.0);
  EXPECT_THROW(f_max(std::vector<double>{}), ArgumentError);
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> s(10);
  for (int i = 0; i < 10; ++i) s[i] = i + 1;
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.25), 3.25);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.5), 5.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.75), 7.75);
}

TEST(BoxStats, TukeyOutliers) {
  const auto b = old_loss_distribution(std::vector<double>{4, 1, 100, 3, 2});
  EXPECT_DOUBLE_EQ(b.q1, 2.0);
  EXPECT_DOUBLE_EQ(b.q3, 4.0);
  ASSERT_EQ(b.outliers.size(), 1u);
  EXPECT_DOUBLE_EQ(b.outliers[0], 100.0);
}

TEST(Cauchy, WorkedExample) {
  const auto c = cauchy_check(std::vector<double>{1, 2}, std::vector<double>{3, -1}, 2.0);
  EXPECT_DOUBLE_EQ(c.lhs, 4.25);
  EXPECT_DOUBLE_EQ(c.rhs, 1.0);
  EXPECT_DOUBLE_EQ(c.gap, 3.25);
  EXPECT_THROW(cauchy_check(std::vector<double>{1}, std::vector<double>{1, 2}, 1.0), DimensionError);
}

TEST(Metrics, AvgAndLast) {
  const auto m = metrics(std::vector<double>{90, 80, 70});
  EXPECT_DOUBLE_EQ(m.avg, 80.0);
  EXPECT_DOUBLE_EQ(m.last, 70.0);
}

TEST(Spearman, MatchesReferenceWithTies) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{5, 6, 7, 8, 7}), 0.8207826816681233,
              1e-14);
}

TEST(Hessian, DiagonalQuadratic) {
  GradientFn g = [](std::span<const double> x) { return std::vector<double>{3.0 * x[0], 1.0 * x[1], 0.5 * x[2]}; };
  const auto e = hessian_top_eigen(g, std::vector<double>{0.1, 0.2, 0.3});
  EXPECT_NEAR(e.value, 3.0, 1e-5);
  EXPECT_TRUE(e.converged);
}

TEST(Hessian, NegativeDominantStillFindsTop) {
  GradientFn g = [](std::span<const double> x) { return std::vector<double>{-5.0 * x[0], 2.0 * x[1]}; };
  HessianOptions o;
  o.max_iters = 2000;
  o.tol = 1e-12;
  EXPECT_NEAR(hessian_top_eigen(g, std::vector<double>{0.0, 0.0}, o).value, 2.0, 1e-6);
}

TEST(Destruction, ConvergedIsTailMean) {
  const auto r = destruction_report(std::vector<double>{0.0, 2.0, 1.0, 0.5, 0.25}, 2);
  EXPECT_DOUBLE_EQ(r.f_max, 2.0);
  EXPECT_DOUBLE_EQ(r.converged_old_loss, 0.375);
}

TEST(Bound, FormulaOnSmallTrace) {
  // N_s = 2, alpha = 0.1, sigma = 4, gradient squares 1 and 3:
  // (2 / 2) * 0.01 * 4 * 4 = 0.16.
  EigenEstimate s;
  s.value = 4.0;
  const auto b = bound_report(std::vector<double>{0.0, 0.05, 0.1, 0.0}, std::vector<double>{1, 3, 5},
                              std::vector<double>{0.5, 0.2}, s, 0.1);
  EXPECT_EQ(b.steps_to_peak, 2u);
  EXPECT_NEAR(b.bound, 0.16, 1e-15);
  EXPECT_NEAR(b.bound_minus_f_max, 0.06, 1e-15);
  EXPECT_DOUBLE_EQ(b.min_cauchy_gap, 0.2);
}

TEST(QuadraticToy, BoundHolds) {
  const auto toy = analytic_quadratic_toy({{2.0, 0.5}, {0.5, 1.0}}, std::vector<double>{0.0, 0.0},
                                          std::vector<double>{3.0, -1.0}, 0.1, 30);
  EXPECT_GE(toy.bound, toy.f_max);
  EXPECT_GT(toy.f_max, 0.0);
}
