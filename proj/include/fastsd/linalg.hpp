#pragma once

// Counted dense linear algebra. Every routine here adds the number of
// scalar additions and multiplications it performs to an OpCounter; a fused
// multiply-add counts as one of each. Divisions and square roots are booked
// as multiplications.

#include "fastsd/model.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace fastsd {

struct OpCounter {
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t visited_nodes = 0;

  void add(std::uint64_t n = 1) { adds += n; }
  void mul(std::uint64_t n = 1) { muls += n; }
  std::uint64_t ops() const { return adds + muls; }

  OpCounter& operator+=(const OpCounter& o) {
    adds += o.adds;
    muls += o.muls;
    visited_nodes += o.visited_nodes;
    return *this;
  }
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw Error(std::string("shape mismatch: ") + what);
}

/// A * x, counting rows * (cols multiplications + cols-1 additions).
inline Vector counted_matvec(const Matrix& A, const Vector& x, OpCounter& c) {
  require_shape(A.cols() == x.size(), "counted_matvec");
  Vector out(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * x(j);
    out(i) = acc;
  }
  const auto r = static_cast<std::uint64_t>(A.rows());
  const auto k = static_cast<std::uint64_t>(A.cols());
  c.mul(r * k);
  if (k > 0) c.add(r * (k - 1));
  return out;
}

/// A^T * x without forming the transpose.
inline Vector counted_tmatvec(const Matrix& A, const Vector& x, OpCounter& c) {
  require_shape(A.rows() == x.size(), "counted_tmatvec");
  Vector out(A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) acc += A(i, j) * x(i);
    out(j) = acc;
  }
  const auto r = static_cast<std::uint64_t>(A.cols());
  const auto k = static_cast<std::uint64_t>(A.rows());
  c.mul(r * k);
  if (k > 0) c.add(r * (k - 1));
  return out;
}

/// A^T A, every one of the M^2 entries computed as a length-N inner product
/// (no symmetry shortcut).
inline Matrix counted_gram(const Matrix& A, OpCounter& c) {
  const Eigen::Index m = A.cols();
  Matrix G(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) G(i, j) = A.col(i).dot(A.col(j));
  const auto mm = static_cast<std::uint64_t>(m * m);
  const auto n = static_cast<std::uint64_t>(A.rows());
  c.mul(mm * n);
  if (n > 0) c.add(mm * (n - 1));
  return G;
}

inline double counted_squared_norm(const Vector& v, OpCounter& c) {
  const auto n = static_cast<std::uint64_t>(v.size());
  c.mul(n);
  if (n > 0) c.add(n - 1);
  return v.squaredNorm();
}

/// H = [Q1 Q2] [R; 0] with R upper triangular and a strictly positive
/// diagonal.
struct QrFactors {
  Matrix Q1;  // N x M
  Matrix Q2;  // N x (N - M)
  Matrix R;   // M x M
};

namespace detail {

/// Householder reflector I - tau v v^T stored in a column of `V`.
struct Reflectors {
  Matrix V;             // N x M, column k holds v_k (zero above row k)
  Vector tau;           // M
  Vector sign;          // +-1 per column, applied after triangularization
};

}  // namespace detail

/// Householder triangularization of H with the diagonal of R made positive.
/// The returned factors carry explicit Q1/Q2; the counter is charged for the
/// triangularization only (see qr_rotate for the cost of forming Q^T y).
class HouseholderQr {
 public:
  HouseholderQr(const Matrix& H, OpCounter& c) { factor(H, c); }

  const Matrix& R() const { return R_; }
  Eigen::Index rows() const { return n_; }
  Eigen::Index cols() const { return m_; }

  /// Q^T y split into (Q1^T y, ||Q2^T y||^2), counted.
  std::pair<Vector, double> rotate(const Vector& y, OpCounter& c) const {
    require_shape(y.size() == n_, "HouseholderQr::rotate");
    Vector w = y;
    for (Eigen::Index k = 0; k < m_; ++k) apply(k, w, c);
    Vector z = w.head(m_);
    for (Eigen::Index k = 0; k < m_; ++k) z(k) *= refl_.sign(k);
    double offset = 0.0;
    if (n_ > m_) offset = counted_squared_norm(w.tail(n_ - m_), c);
    return {z, offset};
  }

  /// Explicit orthonormal factors (not counted; used for inspection).
  QrFactors factors() const {
    Matrix Q = Matrix::Identity(n_, n_);
    OpCounter scratch;
    for (Eigen::Index k = m_ - 1; k >= 0; --k)
      for (Eigen::Index j = 0; j < n_; ++j) {
        Vector col = Q.col(j);
        apply(k, col, scratch);
        Q.col(j) = col;
      }
    for (Eigen::Index k = 0; k < m_; ++k) Q.col(k) *= refl_.sign(k);
    return QrFactors{.Q1 = Q.leftCols(m_), .Q2 = Q.rightCols(n_ - m_), .R = R_};
  }

 private:
  void apply(Eigen::Index k, Vector& w, OpCounter& c) const {
    const Eigen::Index len = n_ - k;
    const auto v = refl_.V.col(k).segment(k, len);
    const double f = refl_.tau(k) * v.dot(w.segment(k, len));
    w.segment(k, len) -= f * v;
    const auto l = static_cast<std::uint64_t>(len);
    c.mul(2 * l + 1);
    c.add(2 * l - 1);
  }

  void factor(const Matrix& H, OpCounter& c) {
    n_ = H.rows();
    m_ = H.cols();
    if (m_ < 1 || n_ < m_) throw Error("qr_decompose: require N >= M >= 1");
    const double scale = H.norm();
    Matrix A = H;
    refl_.V = Matrix::Zero(n_, m_);
    refl_.tau = Vector::Zero(m_);
    refl_.sign = Vector::Ones(m_);
    for (Eigen::Index k = 0; k < m_; ++k) {
      const Eigen::Index len = n_ - k;
      const auto l = static_cast<std::uint64_t>(len);
      auto x = A.col(k).segment(k, len);
      const double norm = std::sqrt(x.squaredNorm());
      c.mul(l + 1);
      c.add(l - 1);
      if (!(norm > 1e-12 * scale)) throw Error("qr_decompose: rank-deficient channel matrix");
      Vector v = x;
      const double s0 = x(0) >= 0.0 ? 1.0 : -1.0;
      v(0) += s0 * norm;
      c.add(1);
      const double vv = v.squaredNorm();
      c.mul(l + 1);  // v^T v and 2 / v^T v
      c.add(l - 1);
      refl_.V.col(k).segment(k, len) = v;
      refl_.tau(k) = 2.0 / vv;
      A(k, k) = -s0 * norm;
      A.col(k).segment(k + 1, len - 1).setZero();
      for (Eigen::Index j = k + 1; j < m_; ++j) {
        Vector col = A.col(j);
        apply(k, col, c);
        A.col(j) = col;
      }
    }
    R_ = A.topRows(m_).triangularView<Eigen::Upper>();
    for (Eigen::Index k = 0; k < m_; ++k) {
      if (R_(k, k) < 0.0) {
        refl_.sign(k) = -1.0;
        R_.row(k) *= -1.0;
      }
      if (!(R_(k, k) > 1e-12 * scale))
        throw Error("qr_decompose: rank-deficient channel matrix");
    }
  }

  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
  detail::Reflectors refl_;
  Matrix R_;
};

inline QrFactors qr_decompose(const Matrix& H, OpCounter& c) {
  return HouseholderQr(H, c).factors();
}

inline QrFactors qr_decompose(const Matrix& H) {
  OpCounter c;
  return qr_decompose(H, c);
}

/// H with its columns reordered: column j of the result is column perm[j]
/// of H.
inline Matrix permute_columns(const Matrix& H, const std::vector<Eigen::Index>& perm) {
  require_shape(static_cast<Eigen::Index>(perm.size()) == H.cols(), "permute_columns");
  Matrix out(H.rows(), H.cols());
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = H.col(perm[j]);
  return out;
}

inline Vector permute(const Vector& v, const std::vector<Eigen::Index>& perm) {
  Vector out(v.size());
  for (std::size_t j = 0; j < perm.size(); ++j) out(static_cast<Eigen::Index>(j)) = v(perm[j]);
  return out;
}

/// Inverse of permute(): out(perm[j]) = v(j).
inline Vector unpermute(const Vector& v, const std::vector<Eigen::Index>& perm) {
  Vector out(v.size());
  for (std::size_t j = 0; j < perm.size(); ++j) out(perm[j]) = v(static_cast<Eigen::Index>(j));
  return out;
}

}  // namespace fastsd
