#include <gtest/gtest.h>

#include "stratalloc/matrix_kit.hpp"
#include "stratalloc/random.hpp"
#include "stratalloc/verification/oracles.hpp"

using namespace stratalloc;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix random_symmetric(Index G, Rng& rng) {
  const Matrix a = random_matrix(G, G, rng);
  return a + a.transpose();
}

double rel(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

}  // namespace

TEST(Vec, StacksColumns) {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  EXPECT_EQ(vec(a), (Vector(4) << 1, 3, 2, 4).finished());
  Matrix one(1, 1);
  one << 5;
  EXPECT_EQ(vec(one), (Vector(1) << 5).finished());
  EXPECT_EQ(unvec(vec(a), 2, 2), a);
}

TEST(Vech, ColumnMajorLowerTriangle) {
  Matrix b(2, 2);
  b << 1, 2, 2, 3;
  EXPECT_EQ(vech(b), (Vector(3) << 1, 2, 3).finished());
  EXPECT_EQ(vech(SymmetricMatrix::identity(3)), (Vector(6) << 1, 0, 0, 1, 0, 1).finished());
  EXPECT_EQ(vech_index(2, 0, 3), 2);
  EXPECT_EQ(vech_index(1, 1, 3), 3);
  EXPECT_EQ(vech_index(2, 2, 3), 5);
  EXPECT_EQ(vech_size(4), 10);
  EXPECT_EQ(dim_from_vech_size(10), 4);
  EXPECT_EQ(dim_from_vech_size(4), -1);
}

TEST(Vech, RejectsAsymmetricInput) {
  Matrix b(2, 2);
  b << 1, 2, 2.0000001, 3;
  EXPECT_THROW(vech(b), DimensionError);
}

TEST(Vech, RoundTripProperty) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const Index G = 1 + static_cast<Index>(rng.below(6));
    const Matrix b = random_symmetric(G, rng);
    EXPECT_EQ(unvech(vech(b), G).to_dense(), b);
    const Vector v = random_matrix(vech_size(G), 1, rng);
    EXPECT_EQ(vech(unvech(v, G)), v);
  }
}

TEST(Unvech, Examples) {
  const SymmetricMatrix b = unvech((Vector(3) << 1, 2, 3).finished(), 2);
  Matrix expected(2, 2);
  expected << 1, 2, 2, 3;
  EXPECT_EQ(b.to_dense(), expected);
  EXPECT_EQ(unvech(Vector::Zero(6), 3).to_dense(), Matrix::Zero(3, 3));
  EXPECT_THROW(unvech(Vector::Zero(4), 2), DimensionError);
}

TEST(SymmetricMatrix, StorageIsSymmetricByConstruction) {
  SymmetricMatrix b(3);
  b(0, 2) = 7.0;
  EXPECT_EQ(b(2, 0), 7.0);
  EXPECT_EQ(b.to_dense(), b.to_dense().transpose());
  EXPECT_DOUBLE_EQ(SymmetricMatrix::identity(4).trace(), 4.0);
}

TEST(Duplication, SmallCases) {
  const auto d1 = duplication(1);
  EXPECT_EQ(d1.D, Matrix::Ones(1, 1));
  EXPECT_EQ(d1.Dpinv, Matrix::Ones(1, 1));
  const auto d2 = duplication(2);
  Matrix expected(4, 3);
  expected << 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1;
  EXPECT_EQ(d2.D, expected);
}

TEST(Duplication, MatchesDefinitionAndPseudoInverse) {
  for (int G = 1; G <= 6; ++G) {
    const auto d = duplication(G);
    const Matrix def = oracle::duplication_by_definition(G);
    EXPECT_EQ(d.D, def);
    EXPECT_LT(rel(d.Dpinv, oracle::pseudo_inverse(def)), 1e-12);
    EXPECT_LT(rel(d.Dpinv, (d.D.transpose() * d.D).inverse() * d.D.transpose()), 1e-15);
    for (Index r = 0; r < d.D.rows(); ++r) EXPECT_EQ(d.D.row(r).sum(), 1.0);
  }
}

TEST(Duplication, DefiningIdentitiesProperty) {
  Rng rng(12);
  for (Index G = 1; G <= 4; ++G) {
    const auto d = duplication(G);
    for (int t = 0; t < 50; ++t) {
      const Matrix b = random_symmetric(G, rng);
      EXPECT_LT(rel(d.D * vech(b), vec(b)), 1e-12);
      EXPECT_LT(rel(d.Dpinv * vec(b), vech(b)), 1e-12);
      EXPECT_LT(rel(d.D * d.Dpinv * vec(b), vec(b)), 1e-12);
    }
  }
}

TEST(Commutation, Examples) {
  EXPECT_EQ(commutation(1, 1), Matrix::Ones(1, 1));
  Matrix c(2, 2);
  c << 1, 2, 3, 4;
  EXPECT_EQ(commutation(2, 2) * vec(c), (Vector(4) << 1, 2, 3, 4).finished());
  Rng rng(13);
  const Matrix c32 = random_matrix(3, 2, rng);
  EXPECT_EQ(commutation(3, 2) * vec(c32), oracle::vec_of_transpose(c32));
}

TEST(Commutation, PermutationProperty) {
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    const Index m = 1 + static_cast<Index>(rng.below(5)), n = 1 + static_cast<Index>(rng.below(5));
    const Matrix k = commutation(m, n);
    EXPECT_EQ(k.transpose() * k, Matrix::Identity(m * n, m * n));
    EXPECT_EQ(commutation(n, m) * k, Matrix::Identity(m * n, m * n));
    for (Index r = 0; r < k.rows(); ++r) EXPECT_EQ(k.row(r).sum(), 1.0);
    const Matrix c = random_matrix(m, n, rng);
    EXPECT_EQ(k * vec(c), oracle::vec_of_transpose(c));
  }
}

TEST(Kron, Examples) {
  EXPECT_EQ(kron(Matrix::Identity(2, 2), Matrix::Identity(2, 2)), Matrix::Identity(4, 4));
  Rng rng(15);
  const Matrix b = random_matrix(2, 3, rng);
  EXPECT_EQ(kron(Matrix::Constant(1, 1, 2.0), b), 2.0 * b);
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  const Matrix k = kron(a, b);
  EXPECT_EQ(k.rows(), 4);
  EXPECT_EQ(k.cols(), 6);
  EXPECT_EQ(k.block(2, 3, 2, 3), 4.0 * b);
}

TEST(Kron, AlgebraicProperties) {
  Rng rng(16);
  for (int t = 0; t < 50; ++t) {
    const Matrix A = random_matrix(2, 2, rng), B = random_matrix(2, 2, rng), C = random_matrix(2, 2, rng),
                 D = random_matrix(2, 2, rng);
    EXPECT_LT(rel(kron(A, B) * kron(C, D), kron(A * C, B * D)), 1e-10);
    EXPECT_LT(rel(kron(kron(A, B), C), kron(A, kron(B, C))), 1e-10);
    const Matrix P = random_matrix(2, 3, rng), Q = random_matrix(3, 4, rng), R = random_matrix(4, 2, rng);
    EXPECT_LT(rel(vec(P * Q * R), kron(R.transpose(), P) * vec(Q)), 1e-10);
  }
}

TEST(Definiteness, Examples) {
  EXPECT_TRUE(is_positive_definite(SymmetricMatrix::identity(2), 0.0));
  Matrix m(2, 2);
  m << 1, 2, 2, 1;
  EXPECT_FALSE(is_positive_definite(SymmetricMatrix::from_dense(m), 0.0));
  EXPECT_FALSE(is_positive_semidefinite(SymmetricMatrix::from_dense(m)));
  EXPECT_NEAR(min_eigenvalue(SymmetricMatrix::from_dense(m)), -1.0, 1e-14);
  EXPECT_FALSE(is_positive_definite(SymmetricMatrix::identity(2) * 1e-14, 1e-10));
  EXPECT_TRUE(is_positive_semidefinite(SymmetricMatrix(3)));
}

TEST(Definiteness, PsdSquareRoot) {
  Rng rng(17);
  const SymmetricMatrix b = oracle::random_psd(3, rng);
  const Matrix r = psd_sqrt(b);
  EXPECT_LT(rel(r * r, b.to_dense()), 1e-12);
}

TEST(NearestKronecker, ExactProductHasZeroResidual) {
  Rng rng(18);
  const Matrix b = oracle::random_psd(2, rng).to_dense();
  EXPECT_LT(nearest_kronecker_residual(kron(b, b), 2), 1e-12);
  EXPECT_GT(nearest_kronecker_residual(random_matrix(4, 4, rng), 2), 1e-3);
}
