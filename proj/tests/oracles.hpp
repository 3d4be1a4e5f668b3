#pragma once

// Independent reference implementations used as test oracles.

#include "fastsd/fsnet.hpp"
#include "fastsd/model.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace oracle {

using fastsd::Constellation;
using fastsd::Matrix;
using fastsd::Vector;

/// FS-Net params with N(0, w_std^2) weights and N(0, b_std^2) biases.
inline fastsd::FsNetParams random_params(Eigen::Index m, int L, fastsd::Modulation mod, double w_std, double b_std,
                                         fastsd::Rng& rng) {
  auto p = fastsd::FsNetParams::zeros(m, L, mod, 0.5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < m; ++i) {
      l.w1(i) = w_std * g(rng);
      l.b1(i) = b_std * g(rng);
      l.w2(i) = w_std * g(rng);
      l.b2(i) = b_std * g(rng);
    }
  }
  return p;
}

/// Distance from x to the nearest kink of psi_t.
inline double kink_distance(double x, const Constellation& c, double t) {
  double d = std::numeric_limits<double>::infinity();
  for (double i : c.omega()) d = std::min({d, std::abs(x + i + t), std::abs(x + i - t)});
  return d;
}

inline double min_kink_distance(const fastsd::FsNetParams& p, const fastsd::ForwardTrace& tr) {
  const Constellation c(p.modulation);
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < tr.a1.size(); ++l)
    for (Eigen::Index i = 0; i < tr.a1[l].size(); ++i)
      d = std::min({d, kink_distance(tr.a1[l](i), c, p.t), kink_distance(tr.a2[l](i), c, p.t)});
  return d;
}

inline double loss_at(const fastsd::FsNetParams& p, const Matrix& H, const Vector& y, const Vector& s, double xi) {
  return fastsd::loss(fastsd::forward(p, H, y).trace, s, xi);
}

/// Pointer to the idx-th scalar parameter in for_each order.
inline double* param_slot(fastsd::FsNetParams& p, std::size_t idx) {
  double* out = nullptr;
  std::size_t k = 0;
  p.for_each([&](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i, ++k)
      if (k == idx) out = &v(i);
  });
  return out;
}

inline std::size_t param_count(const fastsd::FsNetParams& p) {
  std::size_t n = 0;
  p.for_each([&](const Vector& v) { n += static_cast<std::size_t>(v.size()); });
  return n;
}

/// Central difference of the loss with respect to one parameter.
inline double central_difference(fastsd::FsNetParams p, std::size_t idx, const Matrix& H, const Vector& y,
                                 const Vector& s, double xi, double h) {
  double* slot = param_slot(p, idx);
  const double orig = *slot;
  *slot = orig + h;
  const double up = loss_at(p, H, y, s, xi);
  *slot = orig - h;
  const double down = loss_at(p, H, y, s, xi);
  *slot = orig;
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor). The floor sits above the rounding noise
/// of a central difference with step 1e-5 (about 1e-10 for losses near 30),
/// which is what a saturated, exactly-zero gradient is compared against.
inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Decision feedback from the root layer down: each symbol minimizes its own
/// layer's increment given the symbols above.
inline Vector greedy_decision_feedback(const Matrix& R, const Vector& z, const Constellation& c) {
  const Eigen::Index M = R.cols();
  Vector x = Vector::Zero(M);
  for (Eigen::Index k = M - 1; k >= 0; --k) {
    double target = z(k);
    for (Eigen::Index i = k + 1; i < M; ++i) target -= R(k, i) * x(i);
    double best = std::numeric_limits<double>::infinity();
    for (double a : c.alphabet()) {
      const double e = target - R(k, k) * a;
      if (e * e < best) {
        best = e * e;
        x(k) = a;
      }
    }
  }
  return x;
}

/// K-best by brute bookkeeping: every partial candidate keeps a full vector,
/// metrics are recomputed from scratch, and the list is fully sorted.
inline Vector reference_kbest(const Matrix& R, const Vector& z, const Constellation& c, int K) {
  const Eigen::Index M = R.cols();
  struct Cand {
    double metric;
    std::vector<int> path;  // alphabet indices, root first
  };
  std::vector<Cand> list{Cand{0.0, {}}};
  for (Eigen::Index k = M - 1; k >= 0; --k) {
    std::vector<Cand> next;
    for (const Cand& cand : list) {
      for (int a = 0; a < static_cast<int>(c.size()); ++a) {
        Cand child{0.0, cand.path};
        child.path.push_back(a);
        double metric = 0.0;
        for (Eigen::Index row = M - 1; row >= k; --row) {
          double r = z(row);
          for (Eigen::Index col = row; col < M; ++col)
            r -= R(row, col) * c.symbol(static_cast<std::size_t>(child.path[static_cast<std::size_t>(M - 1 - col)]));
          metric += r * r;
        }
        child.metric = metric;
        next.push_back(child);
      }
    }
    std::sort(next.begin(), next.end(), [](const Cand& a, const Cand& b) {
      if (a.metric != b.metric) return a.metric < b.metric;
      return a.path < b.path;
    });
    if (next.size() > static_cast<std::size_t>(K)) next.resize(static_cast<std::size_t>(K));
    list = std::move(next);
  }
  Vector x(M);
  for (Eigen::Index col = 0; col < M; ++col)
    x(col) = c.symbol(static_cast<std::size_t>(list.front().path[static_cast<std::size_t>(M - 1 - col)]));
  return x;
}

/// Textbook MMSE-OSIC: recompute the regularized inverse on the remaining
/// columns at every stage, detect the stream with the smallest error
/// variance (near-ties to the lowest index), subtract it from y.
inline Vector scripted_sic(const Matrix& H, const Vector& y, double lambda, const Constellation& c) {
  const Eigen::Index M = H.cols();
  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(M));
  std::iota(remaining.begin(), remaining.end(), Eigen::Index{0});
  Vector r = y;
  Vector x = Vector::Zero(M);
  while (!remaining.empty()) {
    Matrix Hr(H.rows(), static_cast<Eigen::Index>(remaining.size()));
    for (std::size_t j = 0; j < remaining.size(); ++j) Hr.col(static_cast<Eigen::Index>(j)) = H.col(remaining[j]);
    const Matrix G = (Hr.transpose() * Hr + lambda * Matrix::Identity(Hr.cols(), Hr.cols())).inverse();
    Eigen::Index pick = 0;
    double best = G(0, 0);
    for (Eigen::Index j = 1; j < G.rows(); ++j) {
      if (G(j, j) < best * (1.0 - 1e-10)) {
        pick = j;
        best = G(j, j);
      }
    }
    const double est = (G.row(pick) * Hr.transpose() * r)(0);
    const Eigen::Index col = remaining[static_cast<std::size_t>(pick)];
    x(col) = c.nearest(est);
    r -= H.col(col) * x(col);
    remaining.erase(remaining.begin() + pick);
  }
  return x;
}

}  // namespace oracle
