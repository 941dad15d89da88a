#include <gtest/gtest.h>

#include <cmath>

#include "rrwkv/numerics.hpp"
#include "support.hpp"

using namespace rrwkv;

TEST(Matvec, IdentityZerosAndSmallCase) {
  EXPECT_EQ(matvec(Matrix::identity(3), {1, 2, 3}), (Vector{1, 2, 3}));
  EXPECT_EQ(matvec(Matrix(2, 3), {4, -5, 6}), (Vector{0, 0}));
  EXPECT_EQ(matvec(Matrix{{1, 2}, {3, 4}}, {1, 1}), (Vector{3, 7}));
}

TEST(Matvec, RejectsMismatchedShapes) {
  EXPECT_THROW(matvec(Matrix(2, 3), {1, 2}), ContractViolation);
}

TEST(Matvec, DistributesOverAddition) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(256), cols = 1 + rng.below(256);
    const Matrix W = rng.normal_matrix(rows, cols, 1.0);
    const Vector x = rng.uniform_vector(cols, -1, 1), y = rng.uniform_vector(cols, -1, 1);
    const Vector lhs = matvec(W, elementwise(ElementwiseOp::add, x, y));
    const Vector rhs = elementwise(ElementwiseOp::add, matvec(W, x), matvec(W, y));
    for (std::size_t i = 0; i < rows; ++i) {
      const double scale = std::max({std::abs(lhs[i]), std::abs(rhs[i]), 1.0});
      EXPECT_LE(std::abs(lhs[i] - rhs[i]) / scale, 1e-12);
    }
  }
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(elementwise(ElementwiseOp::sigmoid, {0.0}), (Vector{0.5}));
  EXPECT_EQ(elementwise(ElementwiseOp::square, elementwise(ElementwiseOp::relu, {-2, 3})), (Vector{0, 9}));
  EXPECT_EQ(elementwise(ElementwiseOp::max, {1, 5}, {4, 2}), (Vector{4, 5}));
  EXPECT_EQ(elementwise(ElementwiseOp::sub, {1, 5}, {4, 2}), (Vector{-3, 3}));
  EXPECT_EQ(elementwise(ElementwiseOp::mul, {1, 5}, {4, 2}), (Vector{4, 10}));
  EXPECT_EQ(elementwise(ElementwiseOp::div, {1, 5}, {4, 2}), (Vector{0.25, 2.5}));
  EXPECT_EQ(elementwise(ElementwiseOp::exp, {0.0}), (Vector{1.0}));
}

TEST(Elementwise, DivisionByZeroCarriesIndex) {
  try {
    elementwise(ElementwiseOp::div, {1, 2, 3}, {1, 0, 1});
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Elementwise, ArityAndLengthContracts) {
  EXPECT_THROW(elementwise(ElementwiseOp::add, {1, 2}, {1}), ContractViolation);
  EXPECT_THROW(elementwise(ElementwiseOp::add, {1, 2}), ContractViolation);
  EXPECT_THROW(elementwise(ElementwiseOp::relu, {1, 2}, {1, 2}), ContractViolation);
}

TEST(Sigmoid, OpenIntervalAndSymmetry) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-30, 30);
    const double s = sigmoid(x);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_NEAR(s + sigmoid(-x), 1.0, 1e-12);
  }
  // The branch-stable form never evaluates exp of a large positive argument.
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(MeanPool, Examples) {
  EXPECT_EQ(mean_pool({{1, 1}}), (Vector{1, 1}));
  EXPECT_EQ(mean_pool({{0, 2}, {2, 0}}), (Vector{1, 1}));
  EXPECT_EQ(mean_pool({{1}, {2}, {3}}), (Vector{2}));
}

TEST(MeanPool, Contracts) {
  EXPECT_THROW(mean_pool(std::vector<Vector>{}), ContractViolation);
  EXPECT_THROW(mean_pool({{1, 2}, {1}}), ContractViolation);
}

TEST(MeanPool, ConstantWindowIsExact) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector v = rng.uniform_vector(1 + rng.below(8), -100, 100);
    const std::vector<Vector> window(1 + rng.below(64), v);
    EXPECT_EQ(mean_pool(window), v);
  }
}

TEST(Rng, SplitMixReferenceSequence) {
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next_u64(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06C45D188009454FULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(1234), b(1234), c(1235);
  bool differs = false;
  for (int i = 0; i < 10000; ++i) {
    const double x = a.normal(), y = b.normal();
    ASSERT_EQ(x, y) << "sample " << i;
    differs |= c.normal() != x;
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, Ranges) {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
  EXPECT_THROW(rng.below(0), ContractViolation);
}

TEST(Project, ParallelMatchesSerialExactly) {
  Rng rng(21);
  for (std::size_t T : {1, 63, 64, 300}) {
    const Matrix X = rng.normal_matrix(T, 17, 1.0), W = rng.normal_matrix(9, 17, 1.0);
    EXPECT_EQ(project(X, W), project_serial(X, W));
  }
}

TEST(Project, BackwardAgainstExplicitSums) {
  Rng rng(22);
  const Matrix X = rng.normal_matrix(5, 3, 1.0), W = rng.normal_matrix(4, 3, 1.0), dY = rng.normal_matrix(5, 4, 1.0);
  Matrix dX(5, 3), dW(4, 3);
  project_backward_input(dY, W, dX);
  project_backward_weight(dY, X, dW);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t i = 0; i < 4; ++i) acc += W(i, j) * dY(t, i);
      EXPECT_NEAR(dX(t, j), acc, 1e-14);
    }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t t = 0; t < 5; ++t) acc += dY(t, i) * X(t, j);
      EXPECT_NEAR(dW(i, j), acc, 1e-14);
    }
}
