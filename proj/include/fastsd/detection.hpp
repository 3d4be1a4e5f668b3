#pragma once

#include "fastsd/linalg.hpp"
#include "fastsd/model.hpp"

#include <cstdint>
#include <vector>

namespace fastsd {

/// One shrink of the search sphere: after `node` visited nodes the squared
/// radius became `radius_sq`.
struct RadiusStep {
  std::uint64_t node = 0;
  double radius_sq = 0.0;
};

struct DetectionResult {
  Vector s_hat;             // symbols, in the original column order
  double metric = 0.0;      // ||z - R s_hat||^2 in the frame the decoder used
  OpCounter ops;            // search work (adds, muls, visited nodes)
  std::uint64_t qr_ops = 0;     // triangularization and rotation of y
  std::uint64_t fsnet_ops = 0;  // FS-Net forward pass (DL-aided decoders)
  std::uint64_t init_ops = 0;   // initial-solution work (e.g. OSIC), included in ops
  std::uint64_t restarts = 0;
  bool clamped = false;     // conventional radius fell below ||Q2^T y||^2
  bool early_terminated = false;
  std::vector<RadiusStep> radius_trace;
  std::vector<std::size_t> survivors;  // K-best: survivors per layer, root first

  std::uint64_t visited_nodes() const { return ops.visited_nodes; }
  std::uint64_t total_ops() const { return ops.ops() + qr_ops + fsnet_ops; }
};

/// z_m - sum_{i>m} r_{m,i} x_i, summed in increasing i. The search engines
/// use the same routine so that metrics of identical paths agree bit for bit.
inline double adjusted_target(const Matrix& R, const Vector& z, const Vector& x, Eigen::Index m) {
  double acc = 0.0;
  for (Eigen::Index i = m + 1; i < R.cols(); ++i) acc += R(m, i) * x(i);
  return z(m) - acc;
}

/// phi(x) = ||z - R x||^2, accumulated from the root layer (M) down to the
/// leaf layer (1).
inline double ml_metric(const Vector& x, const Vector& z, const Matrix& R) {
  require_shape(R.rows() == R.cols() && R.cols() == x.size() && z.size() == x.size(), "ml_metric");
  double pd = 0.0;
  for (Eigen::Index m = R.cols() - 1; m >= 0; --m) {
    const double e = adjusted_target(R, z, x, m) - R(m, m) * x(m);
    pd += e * e;
  }
  return pd;
}

/// Counted variant of ml_metric.
inline double ml_metric(const Vector& x, const Vector& z, const Matrix& R, OpCounter& c) {
  const auto m = static_cast<std::uint64_t>(x.size());
  c.mul(m * (m - 1) / 2 + 2 * m);
  c.add(m * (m - 1) / 2 + 2 * m);
  return ml_metric(x, z, R);
}

/// ||y - H x||^2.
inline double residual_norm(const RealSystem& sys, const Vector& x) {
  return (sys.y - sys.H * x).squaredNorm();
}

}  // namespace fastsd
