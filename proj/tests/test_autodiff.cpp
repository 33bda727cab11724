#include <gtest/gtest.h>

#include <cmath>

#include "bdrlab/autodiff.hpp"
#include "bdrlab/error.hpp"
#include "bdrlab/rng.hpp"

using namespace bdrlab;

TEST(Tensor, MatrixFactoryAndAccess) {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Ops, MatmulValueAndShapeError) {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var b = tape.constant(Tensor::matrix({{5}, {6}}));
  const Var c = matmul(a, b);
  EXPECT_DOUBLE_EQ(c.value().at(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(c.value().at(1, 0), 39.0);
  EXPECT_THROW(matmul(b, b), DimensionError);
}

TEST(Ops, BackwardOfSumOfSquares) {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix({{1, -2, 3}}));
  tape.backward(sum(mul(x, x)));
  const auto g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], -4.0);
  EXPECT_DOUBLE_EQ(g[2], 6.0);
}

TEST(Ops, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix({{2.0}}));
  const Var y = scale(x, 3.0);
  tape.backward(sum(y));
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
}

TEST(Ops, BackwardNeedsScalar) {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix({{1, 2}}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Ops, ReluGradientAtZeroIsZero) {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix({{0.0, 1.0, -1.0}}));
  tape.backward(sum(relu(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 0.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[1], 1.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[2], 0.0);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  Tape tape;
  const Var z = tape.constant(Tensor::zeros({3, 4}));
  const std::vector<double> off(4, 0.0);
  const std::vector<std::size_t> labels{0, 1, 3};
  EXPECT_NEAR(ce_with_offset(z, off, labels).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, OffsetShiftsTheTargetLogit) {
  // CE(z + o, y) with o = (ln 2, 0) on z = 0 is -ln(2/3).
  Tape tape;
  const Var z = tape.constant(Tensor::zeros({1, 2}));
  const std::vector<double> off{std::log(2.0), 0.0};
  EXPECT_NEAR(ce_with_offset(z, off, std::vector<std::size_t>{0}).item(), -std::log(2.0 / 3.0), 1e-15);
}

TEST(CrossEntropy, RejectsBadLabelsAndNonFiniteInput) {
  Tape tape;
  const std::vector<double> off(2, 0.0);
  EXPECT_THROW(ce_with_offset(tape.constant(Tensor::zeros({1, 2})), off, std::vector<std::size_t>{2}), IndexError);
  const Var bad = tape.constant(Tensor::matrix({{NAN, 0.0}}));
  EXPECT_THROW(ce_with_offset(bad, off, std::vector<std::size_t>{0}), NumericError);
}

TEST(CrossEntropy, HugeLogitsStayFinite) {
  const std::vector<double> off(2, 0.0);
  const auto [value, grad] = value_and_grad(
      [&](Var x) { return ce_with_offset(x, off, std::vector<std::size_t>{1}); }, Tensor::matrix({{1000.0, -1000.0}}));
  EXPECT_NEAR(value, 2000.0, 1e-9);
  EXPECT_NEAR(grad[0], 1.0, 1e-15);
  EXPECT_NEAR(grad[1], -1.0, 1e-15);
}

TEST(SoftmaxKl, MatchesClosedForm) {
  // Teacher [1, 0], student [0, 1], T = 1: KL = tanh(1/2).
  Tape tape;
  const Var s = tape.constant(Tensor::matrix({{0.0, 1.0}}));
  EXPECT_NEAR(softmax_kl(s, Tensor::matrix({{1.0, 0.0}}), 1.0).item(), 0.46211715726000974, 1e-14);
  EXPECT_NEAR(softmax_kl(tape.constant(Tensor::matrix({{3.0, -1.0}})), Tensor::matrix({{3.0, -1.0}}), 2.0).item(), 0.0,
              1e-15);
}

TEST(SliceCols, RangeChecked) {
  Tape tape;
  const Var x = tape.constant(Tensor::zeros({2, 3}));
  EXPECT_EQ(slice_cols(x, 1, 3).value().cols(), 2u);
  EXPECT_THROW(slice_cols(x, 2, 4), DimensionError);
}

TEST(FiniteDiff, RandomCompositionsAgree) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(6);
    for (double& x : v) x = rng.normal();
    const Tensor w = Tensor::matrix({{0.3, -1.2}, {0.7, 0.1}, {-0.4, 0.9}});
    ScalarFn f = [&](Var x) {
      Var h = matmul(x, x.tape->constant(w));
      return mean(mul(h, scale(h, 0.5)));
    };
    EXPECT_LT(finite_diff_check(f, Tensor({2, 3}, v)), 1e-6);
  }
}
