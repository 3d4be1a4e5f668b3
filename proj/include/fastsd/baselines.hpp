#pragma once

// Reference detectors: linear ZF/MMSE, MMSE-ordered successive interference
// cancellation and exhaustive ML for small systems.

#include "fastsd/detection.hpp"
#include "fastsd/linalg.hpp"
#include "fastsd/model.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace fastsd {

inline Vector detect_zf(const RealSystem& sys) {
  Eigen::ColPivHouseholderQR<Matrix> qr(sys.H);
  qr.setThreshold(1e-12);
  if (qr.rank() < sys.H.cols()) throw Error("detect_zf: channel matrix is column-rank deficient");
  return quantize(qr.solve(sys.y), sys.constellation);
}

/// Regularization sigma_n^2 / sigma_t^2 of the MMSE filter.
inline double mmse_regularizer(const RealSystem& sys) {
  return sys.noise_var / sys.constellation.symbol_energy();
}

inline Vector detect_mmse(const RealSystem& sys) {
  Matrix G = sys.H.transpose() * sys.H;
  G.diagonal().array() += mmse_regularizer(sys);
  Eigen::LDLT<Matrix> ldlt(G);
  if (ldlt.info() != Eigen::Success) throw Error("detect_mmse: factorization failed");
  Vector x = ldlt.solve(sys.H.transpose() * sys.y);
  return quantize(x, sys.constellation);
}

namespace detail {

/// Counted Gauss-Jordan inverse of a symmetric positive definite matrix.
inline Matrix counted_spd_inverse(Matrix A, OpCounter& c) {
  const Eigen::Index n = A.rows();
  Matrix inv = Matrix::Identity(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double p = A(k, k);
    if (!(p > 0.0)) throw Error("OSIC: Gram matrix is not positive definite");
    const double ip = 1.0 / p;
    c.mul(1);
    A.row(k) *= ip;
    inv.row(k) *= ip;
    c.mul(static_cast<std::uint64_t>(2 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = A(i, k);
      A.row(i) -= f * A.row(k);
      inv.row(i) -= f * inv.row(k);
      c.mul(static_cast<std::uint64_t>(2 * n));
      c.add(static_cast<std::uint64_t>(2 * n));
    }
  }
  return inv;
}

}  // namespace detail

inline constexpr double kOsicTieTol = 1e-10;

/// MMSE-ordered SIC. At every stage the remaining stream with the largest
/// post-detection SINR (smallest diagonal entry of the regularized inverse
/// Gram matrix) is detected, cancelled, and removed; the inverse is
/// downdated through its Schur complement. Work is charged to `c`.
inline Vector detect_osic(const RealSystem& sys, OpCounter& c) {
  const Eigen::Index m = sys.H.cols();
  const double lambda = mmse_regularizer(sys);
  Matrix gram = counted_gram(sys.H, c);
  Matrix reg = gram;
  reg.diagonal().array() += lambda;
  c.add(static_cast<std::uint64_t>(m));
  Matrix P = detail::counted_spd_inverse(reg, c);
  Vector r = counted_tmatvec(sys.H, sys.y, c);

  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) remaining[static_cast<std::size_t>(i)] = i;
  Vector out = Vector::Zero(m);
  while (!remaining.empty()) {
    // Strongest stream. The real and imaginary parts of one complex stream
    // have equal error variance, so near-ties (within kOsicTieTol relative)
    // go to the lowest index instead of to rounding noise.
    std::size_t pick = 0;
    for (std::size_t a = 1; a < remaining.size(); ++a) {
      const double best = P(remaining[pick], remaining[pick]);
      if (P(remaining[a], remaining[a]) < best * (1.0 - kOsicTieTol)) pick = a;
    }
    const Eigen::Index k = remaining[pick];
    double est = 0.0;
    for (Eigen::Index j : remaining) est += P(k, j) * r(j);
    const auto rs = static_cast<std::uint64_t>(remaining.size());
    c.mul(rs);
    c.add(rs - 1);
    const double sym = sys.constellation.nearest(est);
    out(k) = sym;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    for (Eigen::Index j : remaining) r(j) -= gram(j, k) * sym;
    const auto left = static_cast<std::uint64_t>(remaining.size());
    c.mul(left);
    c.add(left);
    const double pkk = P(k, k);
    for (Eigen::Index a : remaining)
      for (Eigen::Index b : remaining) P(a, b) -= P(a, k) * P(k, b) / pkk;
    c.mul(2 * left * left);
    c.add(left * left);
  }
  return out;
}

inline Vector detect_osic(const RealSystem& sys) {
  OpCounter c;
  return detect_osic(sys, c);
}

/// Exhaustive arg min over A^M of ||y - H x||^2. The first minimizer in
/// odometer order (last coordinate fastest) wins ties.
inline DetectionResult detect_ml_bruteforce(const RealSystem& sys) {
  const Eigen::Index m = sys.H.cols();
  const auto& c = sys.constellation;
  const double space = std::pow(static_cast<double>(c.size()), static_cast<double>(m));
  if (space > static_cast<double>(1u << 20)) throw Error("detect_ml_bruteforce: search space exceeds 2^20");
  std::vector<std::size_t> idx(static_cast<std::size_t>(m), 0);
  Vector x(m);
  for (Eigen::Index i = 0; i < m; ++i) x(i) = c.symbol(0);
  DetectionResult best;
  best.metric = std::numeric_limits<double>::infinity();
  const auto total = static_cast<std::uint64_t>(space);
  for (std::uint64_t n = 0; n < total; ++n) {
    const double val = residual_norm(sys, x);
    if (val < best.metric) {
      best.metric = val;
      best.s_hat = x;
    }
    for (Eigen::Index pos = m - 1; pos >= 0; --pos) {
      auto& k = idx[static_cast<std::size_t>(pos)];
      k = (k + 1) % c.size();
      x(pos) = c.symbol(k);
      if (k != 0) break;
    }
  }
  best.ops.visited_nodes = total;
  return best;
}

}  // namespace fastsd
