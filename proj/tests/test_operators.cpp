#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rrm/error.hpp"
#include "rrm/flops.hpp"
#include "rrm/operators.hpp"

using namespace rrm;

namespace {

double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// A random expression mixing every node kind, n×m.
Operator random_expression(Index n, Index m, std::mt19937_64& rng) {
  const Index k = 3;
  Operator sparse = Operator::sparse(oracle::random_observed(n, m, 0.3, rng));
  Operator low = Operator::low_rank(oracle::gaussian(n, k, rng), oracle::gaussian(m, k, rng));
  Operator diag_left = Operator::diagonal(oracle::gaussian_vec(n, rng));
  Operator dense_small = Operator::dense(oracle::gaussian(m, m, rng));
  Operator prod = Operator::product({diag_left, sparse, dense_small});
  Operator eye = Operator::identity(m);
  Operator tail = Operator::product({Operator::dense(oracle::gaussian(n, m, rng)),
                                     Operator::transposed(Operator::sum({eye, 0.5 * eye}))});
  return Operator::sum({prod, 2.0 * low, Operator::scaled(-0.25, tail)});
}

}  // namespace

TEST(ObservedMatrix, SortsRowMajorAndRejectsDuplicates) {
  ObservedMatrix y(3, 2, {{2, 1, 1.0}, {0, 1, 2.0}, {0, 0, 3.0}});
  ASSERT_EQ(y.nnz(), 3);
  EXPECT_EQ(y.row(0), 0);
  EXPECT_EQ(y.col(0), 0);
  EXPECT_EQ(y.col(1), 1);
  EXPECT_EQ(y.row(2), 2);
  EXPECT_DOUBLE_EQ(y.values()[0], 3.0);
  EXPECT_THROW(ObservedMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), DataError);
  EXPECT_THROW(ObservedMatrix(2, 2, {{2, 0, 1.0}}), DataError);
  EXPECT_THROW(ObservedMatrix(2, 2, {}), DataError);
}

TEST(ObservedMatrix, WideShapesAreAllowed) {
  ObservedMatrix y(2, 5, {{0, 4, 1.0}, {1, 0, 2.0}});
  EXPECT_EQ(y.cols(), 5);
  EXPECT_EQ(y.transposed().rows(), 5);
}

TEST(ObservedMatrix, ProductsMatchDense) {
  std::mt19937_64 rng(7);
  ObservedMatrix y = oracle::random_observed(20, 13, 0.3, rng);
  Matrix d = oracle::dense(y);
  Matrix x = oracle::gaussian(13, 4, rng);
  Matrix z = oracle::gaussian(20, 4, rng);
  EXPECT_LT(rel_err(y.times(x), d * x), 1e-12);
  EXPECT_LT(rel_err(y.transpose_times(z), d.transpose() * z), 1e-12);
  EXPECT_LT(rel_err(y.row_sums(), d.rowwise().sum()), 1e-12);
  EXPECT_LT(rel_err(y.col_sums(), d.colwise().sum().transpose()), 1e-12);
  EXPECT_LT(rel_err(oracle::dense(y.transposed()), d.transpose()), 0.0 + 1e-15);
  ObservedMatrix w = y.with_values(Vector::Ones(y.nnz()));
  EXPECT_TRUE(w.same_pattern(y));
}

TEST(ObservedMatrix, SubsetKeepsChosenEntries) {
  std::mt19937_64 rng(3);
  ObservedMatrix y = oracle::random_observed(10, 8, 0.5, rng);
  std::vector<Index> pos{0, 2, 5};
  ObservedMatrix s = y.subset(pos);
  ASSERT_EQ(s.nnz(), 3);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_EQ(s.row(k), y.row(pos[k]));
    EXPECT_EQ(s.col(k), y.col(pos[k]));
    EXPECT_EQ(s.values()[k], y.values()[pos[k]]);
  }
}

TEST(Operator, MaterializationEquivalence) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 5 + trial, m = 3 + trial / 2;
    Operator op = random_expression(n, m, rng);
    ASSERT_EQ(op.rows(), n);
    ASSERT_EQ(op.cols(), m);
    Matrix dense = oracle::materialize(op);
    Matrix x = oracle::gaussian(m, 3, rng);
    Matrix u = oracle::gaussian(n, 2, rng);
    EXPECT_LT(rel_err(op.apply(x), dense * x), 1e-10);
    EXPECT_LT(rel_err(op.apply_adjoint(u), dense.transpose() * u), 1e-10);
    Operator t = Operator::transposed(op);
    EXPECT_LT(rel_err(t.apply(u), dense.transpose() * u), 1e-10);
  }
}

TEST(Operator, AdjointIdentity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Operator op = random_expression(12, 9, rng);
    Vector v = oracle::gaussian_vec(9, rng);
    Vector u = oracle::gaussian_vec(12, rng);
    const double lhs = u.dot(op.apply(v).col(0));
    const double rhs = op.apply_adjoint(u).col(0).dot(v);
    EXPECT_LT(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-10);
  }
}

TEST(Operator, DimensionMismatchIsReported) {
  Operator a = Operator::identity(3);
  Operator b = Operator::identity(4);
  EXPECT_THROW(a + b, DimensionError);
  EXPECT_THROW(a * b, DimensionError);
  EXPECT_THROW(a.apply(Matrix::Zero(4, 1)), DimensionError);
}

TEST(Operator, SparseApplyCountsOnlyNonzeros) {
  std::mt19937_64 rng(2);
  ObservedMatrix y = oracle::random_observed(100, 80, 0.05, rng);
  Operator op = Operator::sparse(y);
  FlopScope scope;
  op.apply(Matrix::Ones(80, 2));
  EXPECT_EQ(scope.count(), static_cast<std::uint64_t>(2 * 2 * y.nnz()));
}

TEST(Woodbury, MatchesDenseSolve) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix w = oracle::orthonormal(10, 3, rng);
    Vector d(3);
    d << 0.5, -0.3, 2.0;
    SymmetricSolvable a(1.5, w, d);
    Matrix dense = 1.5 * Matrix::Identity(10, 10) + w * d.asDiagonal() * w.transpose();
    EXPECT_LT(rel_err(oracle::materialize(a.as_operator()), dense), 1e-12);
    Matrix b = oracle::gaussian(10, 2, rng);
    EXPECT_LT(rel_err(woodbury_solve(a, b), dense.fullPivLu().solve(b)), 1e-10);
    Matrix x = oracle::gaussian(10, 1, rng);
    EXPECT_LT(rel_err(woodbury_solve(a, a.apply(x)), x), 1e-8);
  }
}

TEST(Woodbury, SingularCorrectionNamesEigenvalue) {
  std::mt19937_64 rng(4);
  Matrix w = oracle::orthonormal(6, 2, rng);
  Vector d(2);
  d << 0.3, -1.0;
  SymmetricSolvable a(1.0, w, d);
  try {
    woodbury_solve(a, Matrix::Ones(6, 1));
    FAIL() << "expected SingularityError";
  } catch (const SingularityError& e) {
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
}

TEST(Woodbury, RejectsNonOrthonormalBasis) {
  Matrix w = Matrix::Ones(4, 1);
  EXPECT_THROW(SymmetricSolvable(1.0, w, Vector::Ones(1)), ArgumentError);
}
