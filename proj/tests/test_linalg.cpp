#include "fastsd/linalg.hpp"
#include "fastsd/model.hpp"

#include <gtest/gtest.h>

#include <Eigen/QR>

using namespace fastsd;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix A(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) A(i, j) = g(rng);
  return A;
}

void expect_valid_qr(const Matrix& H, const QrFactors& f) {
  const Eigen::Index n = H.rows(), m = H.cols();
  ASSERT_EQ(f.Q1.rows(), n);
  ASSERT_EQ(f.Q1.cols(), m);
  ASSERT_EQ(f.Q2.cols(), n - m);
  ASSERT_EQ(f.R.rows(), m);
  EXPECT_LE((H - f.Q1 * f.R).norm(), 1e-9 * H.norm());
  Matrix Q(n, n);
  Q << f.Q1, f.Q2;
  EXPECT_LE((Q.transpose() * Q - Matrix::Identity(n, n)).norm(), 1e-9);
  for (Eigen::Index k = 0; k < m; ++k) EXPECT_GT(f.R(k, k), 0.0);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < i; ++j) EXPECT_EQ(f.R(i, j), 0.0);
}

}  // namespace

TEST(Qr, Identity) {
  const Matrix I = Matrix::Identity(4, 4);
  const QrFactors f = qr_decompose(I);
  EXPECT_LE((f.Q1 - I).norm(), 1e-15);
  EXPECT_LE((f.R - I).norm(), 1e-15);
}

TEST(Qr, PermutationMatrixGetsPositiveDiagonal) {
  Matrix H(2, 2);
  H << 0, 1, 1, 0;
  expect_valid_qr(H, qr_decompose(H));
}

TEST(Qr, NegativeDiagonalInputs) {
  Matrix H = -Matrix::Identity(3, 3);
  H(0, 2) = 0.5;
  expect_valid_qr(H, qr_decompose(H));
}

TEST(Qr, RandomSquareAndTall) {
  expect_valid_qr(random_matrix(32, 32, 1), qr_decompose(random_matrix(32, 32, 1)));
  expect_valid_qr(random_matrix(12, 8, 2), qr_decompose(random_matrix(12, 8, 2)));
  expect_valid_qr(random_matrix(7, 1, 3), qr_decompose(random_matrix(7, 1, 3)));
}

TEST(Qr, AgreesWithEigenUpToSigns) {
  const Matrix H = random_matrix(10, 6, 4);
  const QrFactors f = qr_decompose(H);
  const Eigen::HouseholderQR<Matrix> ref(H);
  const Matrix Rref = ref.matrixQR().topRows(6).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < 6; ++k) {
    const double s = Rref(k, k) < 0 ? -1.0 : 1.0;
    EXPECT_LE((f.R.row(k) - s * Rref.row(k)).norm(), 1e-10);
  }
}

TEST(Qr, RankDeficientThrows) {
  Matrix H = random_matrix(6, 4, 5);
  H.col(3) = 2.0 * H.col(1);
  EXPECT_THROW(qr_decompose(H), Error);
  EXPECT_THROW(qr_decompose(Matrix::Zero(3, 3)), Error);
  EXPECT_THROW(qr_decompose(random_matrix(3, 4, 6)), Error);
}

TEST(Qr, RotationMatchesExplicitFactors) {
  const Matrix H = random_matrix(10, 6, 7);
  const Vector y = random_matrix(10, 1, 8).col(0);
  OpCounter c;
  const HouseholderQr qr(H, c);
  OpCounter rc;
  const auto [z, offset] = qr.rotate(y, rc);
  const QrFactors f = qr.factors();
  EXPECT_LE((z - f.Q1.transpose() * y).norm(), 1e-12);
  EXPECT_NEAR(offset, (f.Q2.transpose() * y).squaredNorm(), 1e-12);
  EXPECT_GT(rc.ops(), 0u);
  // phi(x) + ||Q2^T y||^2 = ||y - H x||^2.
  const Vector x = random_matrix(6, 1, 9).col(0);
  EXPECT_NEAR((z - qr.R() * x).squaredNorm() + offset, (y - H * x).squaredNorm(), 1e-10);
}

TEST(Qr, SquareRotationHasNoOffset) {
  const Matrix H = random_matrix(8, 8, 10);
  OpCounter c;
  const HouseholderQr qr(H, c);
  EXPECT_EQ(qr.rotate(Vector::Ones(8), c).second, 0.0);
}

TEST(Qr, CountsWork) {
  OpCounter small, large;
  HouseholderQr(random_matrix(4, 4, 11), small);
  HouseholderQr(random_matrix(16, 16, 12), large);
  EXPECT_GT(small.ops(), 0u);
  EXPECT_GT(large.ops(), 20 * small.ops());
}

TEST(CountedOps, TransposedProductMatchesFormula) {
  const Matrix H = random_matrix(32, 32, 13);
  const Vector y = random_matrix(32, 1, 14).col(0);
  OpCounter c;
  const Vector out = counted_tmatvec(H, y, c);
  EXPECT_EQ(c.ops(), 2016u);
  EXPECT_EQ(c.muls, 1024u);
  EXPECT_EQ(c.adds, 992u);
  EXPECT_LE((out - H.transpose() * y).norm(), 1e-12);
}

TEST(CountedOps, GramMatchesFormula) {
  const Matrix H = random_matrix(32, 32, 15);
  OpCounter c;
  const Matrix G = counted_gram(H, c);
  EXPECT_EQ(c.ops(), 64512u);
  EXPECT_LE((G - H.transpose() * H).norm(), 1e-10);

  const Matrix T = random_matrix(10, 6, 16);
  OpCounter ct;
  counted_gram(T, ct);
  EXPECT_EQ(ct.ops(), 36u * 19u);
}

TEST(CountedOps, MatvecAndNorm) {
  const Matrix A = random_matrix(5, 3, 17);
  const Vector x = random_matrix(3, 1, 18).col(0);
  OpCounter c;
  const Vector out = counted_matvec(A, x, c);
  EXPECT_EQ(c.muls, 15u);
  EXPECT_EQ(c.adds, 10u);
  EXPECT_LE((out - A * x).norm(), 1e-12);

  OpCounter n;
  EXPECT_NEAR(counted_squared_norm(x, n), x.squaredNorm(), 1e-14);
  EXPECT_EQ(n.muls, 3u);
  EXPECT_EQ(n.adds, 2u);
}

TEST(CountedOps, ShapeMismatchThrows) {
  OpCounter c;
  const Vector x = Vector::Ones(3);
  EXPECT_THROW(counted_matvec(Matrix::Ones(3, 2), x, c), Error);
  EXPECT_THROW(counted_tmatvec(Matrix::Ones(2, 3), x, c), Error);
}

TEST(CountedOps, CounterIsMonotone) {
  OpCounter c;
  std::uint64_t prev = 0;
  for (int i = 1; i <= 5; ++i) {
    counted_gram(random_matrix(i + 2, i, 20 + static_cast<std::uint64_t>(i)), c);
    EXPECT_GE(c.ops(), prev);
    prev = c.ops();
  }
}

TEST(Permutation, RoundTrip) {
  const std::vector<Eigen::Index> perm{2, 0, 3, 1};
  const Matrix H = random_matrix(4, 4, 30);
  const Matrix P = permute_columns(H, perm);
  for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_EQ(P.col(static_cast<Eigen::Index>(j)), H.col(perm[j]));
  Vector x(4);
  x << 1, 2, 3, 4;
  const Vector px = permute(x, perm);
  EXPECT_EQ(unpermute(px, perm), x);
  EXPECT_LE((P * px - H * x).norm(), 1e-12);
}
