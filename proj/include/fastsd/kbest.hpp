#pragma once

// Breadth-first K-best sphere decoding, plain and FS-Net aided.

#include "fastsd/detection.hpp"
#include "fastsd/fsnet.hpp"
#include "fastsd/sphere.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace fastsd {

struct KbestConfig {
  int K = 16;
  bool early_reject = true;
  bool layer_order = true;
  double alpha = 2.0;

  void validate() const {
    if (K < 1) throw Error("K-best: K must be >= 1");
  }
};

namespace detail {

/// Partial path from the root. `sym` holds alphabet indices, root first.
struct KPath {
  double metric = 0.0;
  std::vector<std::uint8_t> sym;
};

/// Total order used for survivor selection: metric, then the symbol index
/// sequence from the root. Independent of the candidate set, so selecting
/// from a subset agrees with selecting from the superset.
inline bool path_less(const KPath& a, const KPath& b) {
  if (a.metric != b.metric) return a.metric < b.metric;
  return a.sym < b.sym;
}

struct KbestOutcome {
  bool any = false;
  Vector x;
  double metric = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> survivors;
  std::vector<RadiusStep> best_per_layer;  // (nodes so far, best partial metric)
};

/// Layer-by-layer expansion keeping the K smallest metrics; with
/// `threshold` finite, survivors whose metric exceeds it are then pruned.
inline KbestOutcome kbest_search(const Matrix& R, const Vector& z, const Constellation& c, int K,
                                 double threshold, OpCounter& ops) {
  const Eigen::Index M = R.cols();
  KbestOutcome out;
  out.survivors.assign(static_cast<std::size_t>(M), 0);
  std::vector<KPath> alive{KPath{}};
  std::vector<KPath> children;
  Vector x = Vector::Zero(M);
  for (Eigen::Index k = M - 1; k >= 0; --k) {
    children.clear();
    const auto above = static_cast<std::uint64_t>(M - 1 - k);
    for (const KPath& p : alive) {
      for (std::size_t j = 0; j < p.sym.size(); ++j)
        x(M - 1 - static_cast<Eigen::Index>(j)) = c.symbol(p.sym[j]);
      const double z_adj = adjusted_target(R, z, x, k);
      ops.mul(above);
      ops.add(above);
      for (std::size_t s = 0; s < c.size(); ++s) {
        const double e = z_adj - R(k, k) * c.symbol(s);
        KPath child{p.metric + e * e, p.sym};
        child.sym.push_back(static_cast<std::uint8_t>(s));
        children.push_back(std::move(child));
      }
      ops.mul(2 * c.size());
      ops.add(2 * c.size());
      ops.visited_nodes += c.size();
    }
    const std::size_t keep = std::min(children.size(), static_cast<std::size_t>(K));
    std::partial_sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(keep), children.end(),
                      path_less);
    children.resize(keep);
    if (threshold < std::numeric_limits<double>::infinity()) {
      std::erase_if(children, [threshold](const KPath& p) { return p.metric > threshold; });
    }
    alive.swap(children);
    out.survivors[static_cast<std::size_t>(M - 1 - k)] = alive.size();
    if (alive.empty()) return out;
    out.best_per_layer.push_back({ops.visited_nodes, alive.front().metric});
  }
  const KPath& best = alive.front();
  out.any = true;
  out.metric = best.metric;
  out.x.resize(M);
  for (std::size_t j = 0; j < best.sym.size(); ++j)
    out.x(M - 1 - static_cast<Eigen::Index>(j)) = c.symbol(best.sym[j]);
  return out;
}

}  // namespace detail

/// Conventional K-best decoder in natural layer order.
inline DetectionResult decode_ksd(const RealSystem& sys, int K) {
  if (K < 1) throw Error("K-best: K must be >= 1");
  DetectionResult res;
  const detail::Rotated rot = detail::rotate(sys.H, sys.y, res.qr_ops);
  auto out = detail::kbest_search(rot.R, rot.z, sys.constellation, K,
                                  std::numeric_limits<double>::infinity(), res.ops);
  res.s_hat = std::move(out.x);
  res.metric = out.metric;
  res.survivors = std::move(out.survivors);
  res.radius_trace = std::move(out.best_per_layer);
  return res;
}

/// FDL-KSD: FS-Net layer ordering, K-best expansion, and early rejection of
/// survivors whose metric exceeds d^2 = min{alpha N_r sigma_n^2, phi(s_hat)}.
/// When every path is rejected and the conventional radius was the binding
/// term, the search is repeated once with d^2 = phi(s_hat). When every path
/// is rejected under phi(s_hat) the FS-Net solution is returned. Either way
/// the result is never worse than s_hat, nor than plain K-best on the same
/// column order.
inline DetectionResult decode_fdl_ksd(const RealSystem& sys, const FsNetParams& params,
                                      const KbestConfig& cfg = {}) {
  cfg.validate();
  DetectionResult res;
  const FsNetSeed seed = fsnet_seed(sys, params, cfg.layer_order, res);
  double threshold = std::numeric_limits<double>::infinity();
  if (cfg.early_reject) {
    const double conv = detail::conventional_radius(sys, cfg.alpha) - seed.rot.offset;
    res.clamped = conv < 0.0;
    // Rounding floor so that a noiseless true path survives a zero radius.
    const double floor = 1e-9 * (sys.y.squaredNorm() + 1.0);
    threshold = std::min(std::max(conv, floor), seed.phi_hat);
  }
  auto out = detail::kbest_search(seed.rot.R, seed.rot.z, sys.constellation, cfg.K, threshold, res.ops);
  if (!out.any && threshold < seed.phi_hat) {
    ++res.restarts;
    out = detail::kbest_search(seed.rot.R, seed.rot.z, sys.constellation, cfg.K, seed.phi_hat, res.ops);
  }
  res.survivors = std::move(out.survivors);
  res.radius_trace = std::move(out.best_per_layer);
  if (out.any) {
    res.s_hat = unpermute(out.x, seed.perm);
    res.metric = out.metric;
  } else {
    res.early_terminated = true;
    res.s_hat = unpermute(seed.hard, seed.perm);
    res.metric = seed.phi_hat;
  }
  return res;
}

/// Survivors per layer of a finished K-best run, root layer first; zero
/// after an early termination.
inline std::vector<std::size_t> survivor_profile(const DetectionResult& run) {
  return run.survivors;
}

}  // namespace fastsd
