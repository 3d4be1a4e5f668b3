#pragma once

// Depth-first sphere decoding on the QR-rotated problem ||z - R x||^2.
//
// All decoders share one enumeration engine. Layers are visited from the
// root (last column, index M-1) to the leaf (index 0); at each layer the
// admissible symbols [LB, UB] are emitted in an order chosen by the policy:
//   Natural         ascending symbol value (Fincke-Pohst),
//   SchnorrEuchner  by distance to z_{m|m+1} / r_mm,
//   FdlNet          by distance to the FS-Net soft output s^[L]_m.
// Equidistant symbols are emitted smaller magnitude first, then smaller
// value, which is the quantizer's tie rule; hence the first FdlNet path is
// exactly quantize(s^[L]).

#include "fastsd/baselines.hpp"
#include "fastsd/detection.hpp"
#include "fastsd/fsnet.hpp"
#include "fastsd/linalg.hpp"
#include "fastsd/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace fastsd {

enum class SymbolOrder { Natural, SchnorrEuchner, FdlNet };

/// Alphabet indices [lb, ub] of the symbols admissible at one layer.
struct LayerBounds {
  int lb = 0;
  int ub = -1;
  bool empty() const { return lb > ub; }
};

/// LB = ceil_A((z_adj - d) / r_mm), UB = floor_A((z_adj + d) / r_mm), where
/// ceil_A / floor_A round to the nearest alphabet symbol above / below.
/// `slack` widens the interval (in symbol units) before rounding.
inline LayerBounds layer_bounds(double z_adj, double d, double r_mm, const Constellation& c,
                                double slack = 0.0) {
  const double n = static_cast<double>(c.size());
  const double lo = (z_adj - d) / r_mm - slack;
  const double hi = (z_adj + d) / r_mm + slack;
  // Symbol i is 2i - (n - 1).
  const double lo_idx = std::ceil((lo + n - 1.0) / 2.0);
  const double hi_idx = std::floor((hi + n - 1.0) / 2.0);
  LayerBounds b;
  b.lb = static_cast<int>(std::max(0.0, std::min(lo_idx, n)));
  b.ub = static_cast<int>(std::min(n - 1.0, std::max(hi_idx, -1.0)));
  return b;
}

/// True when symbol a should be emitted before symbol b for the given anchor.
inline bool emitted_before(double a, double b, double anchor) {
  const double da = std::abs(a - anchor);
  const double db = std::abs(b - anchor);
  if (da != db) return da < db;
  if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
  return a < b;
}

/// Emission order of the admissible symbols (as alphabet indices).
inline std::vector<int> order_symbols(LayerBounds b, SymbolOrder policy, double anchor,
                                      const Constellation& c) {
  std::vector<int> out;
  for (int i = b.lb; i <= b.ub; ++i) out.push_back(i);
  if (policy != SymbolOrder::Natural) {
    std::stable_sort(out.begin(), out.end(), [&](int x, int y) {
      return emitted_before(c.symbol(static_cast<std::size_t>(x)),
                            c.symbol(static_cast<std::size_t>(y)), anchor);
    });
  }
  return out;
}

struct SearchOutcome {
  bool found = false;
  Vector x;
  double metric = std::numeric_limits<double>::infinity();
};

/// Depth-first enumeration engine over a fixed (R, z).
class SphereSearch {
 public:
  SphereSearch(const Matrix& R, const Vector& z, const Constellation& c, SymbolOrder order,
               const Vector* anchor, OpCounter& counter, std::vector<RadiusStep>* trace)
      : R_(R), z_(z), c_(c), order_(order), anchor_(anchor), ops_(counter), trace_(trace) {
    require_shape(R.rows() == R.cols() && z.size() == R.cols(), "SphereSearch");
    if (order == SymbolOrder::FdlNet) {
      if (anchor == nullptr || anchor->size() != R.cols())
        throw Error("SphereSearch: FdlNet order requires an anchor per layer");
    }
    if (c.size() > kMaxLevels) throw Error("SphereSearch: alphabet too large");
  }

  /// Runs one complete search with squared radius `radius_sq` (already
  /// reduced by ||Q2^T y||^2). A leaf x is accepted when phi(x) <= radius_sq,
  /// after which the radius becomes phi(x). `incumbent` seeds the returned
  /// solution without shrinking the radius further.
  SearchOutcome run(double radius_sq, std::optional<SearchOutcome> incumbent = {}) {
    const Eigen::Index M = R_.cols();
    SearchOutcome best = incumbent.value_or(SearchOutcome{});
    double radius = radius_sq;
    if (!(radius >= 0.0)) return best;

    x_ = Vector::Zero(M);
    levels_.assign(static_cast<std::size_t>(M), Level{});
    Eigen::Index k = M - 1;
    enter(k, 0.0, radius);
    while (true) {
      Level& lv = levels_[static_cast<std::size_t>(k)];
      if (lv.pos >= lv.count) {
        if (++k >= M) break;
        continue;
      }
      const double sym = c_.symbol(lv.order[lv.pos++]);
      const double e = lv.z_adj - R_(k, k) * sym;
      const double pd = lv.pd + e * e;
      ops_.mul(2);
      ops_.add(2);
      if (pd > radius) continue;
      ++ops_.visited_nodes;
      x_(k) = sym;
      if (k == 0) {
        radius = pd;
        best.found = true;
        best.x = x_;
        best.metric = pd;
        if (trace_) trace_->push_back({ops_.visited_nodes, pd});
        continue;
      }
      --k;
      enter(k, pd, radius);
    }
    return best;
  }

 private:
  static constexpr std::size_t kMaxLevels = 8;

  struct Level {
    double z_adj = 0.0;
    double pd = 0.0;  // partial metric of the layers above
    std::array<std::uint8_t, kMaxLevels> order{};
    int count = 0;
    int pos = 0;
  };

  void enter(Eigen::Index k, double pd, double radius) {
    const Eigen::Index M = R_.cols();
    Level& lv = levels_[static_cast<std::size_t>(k)];
    lv.pd = pd;
    lv.pos = 0;
    lv.count = 0;
    lv.z_adj = adjusted_target(R_, z_, x_, k);
    const auto above = static_cast<std::uint64_t>(M - 1 - k);
    ops_.mul(above);
    ops_.add(above);
    const double d2 = radius - pd;
    ops_.add(1);
    if (d2 < 0.0) return;
    const double d = std::sqrt(d2);
    const double rkk = R_(k, k);
    ops_.mul(3);
    ops_.add(2);
    const LayerBounds b = layer_bounds(lv.z_adj, d, rkk, c_, kSlack);
    if (b.empty()) return;
    double anchor = 0.0;
    if (order_ == SymbolOrder::SchnorrEuchner) {
      anchor = lv.z_adj / rkk;
      ops_.mul(1);
    } else if (order_ == SymbolOrder::FdlNet) {
      anchor = (*anchor_)(k);
    }
    for (int i = b.lb; i <= b.ub; ++i) lv.order[static_cast<std::size_t>(lv.count++)] = static_cast<std::uint8_t>(i);
    if (order_ != SymbolOrder::Natural) {
      ops_.add(static_cast<std::uint64_t>(lv.count));
      std::stable_sort(lv.order.begin(), lv.order.begin() + lv.count, [&](std::uint8_t a, std::uint8_t bb) {
        return emitted_before(c_.symbol(a), c_.symbol(bb), anchor);
      });
    }
  }

  // Rounding guard on the interval; every emitted symbol is re-checked
  // exactly against the radius.
  static constexpr double kSlack = 1e-9;

  const Matrix& R_;
  const Vector& z_;
  const Constellation& c_;
  SymbolOrder order_;
  const Vector* anchor_;
  OpCounter& ops_;
  std::vector<RadiusStep>* trace_;
  Vector x_;
  std::vector<Level> levels_;
};

struct SdConfig {
  double alpha = 2.0;  // conventional radius alpha * N_r * sigma_n^2
  bool record_trace = true;
};

struct FdlSdConfig {
  double alpha = 2.0;
  bool layer_order = true;
  bool record_trace = true;
};

namespace detail {

struct Rotated {
  Matrix R;
  Vector z;
  double offset = 0.0;  // ||Q2^T y||^2
};

inline Rotated rotate(const Matrix& H, const Vector& y, std::uint64_t& qr_ops) {
  OpCounter c;
  HouseholderQr qr(H, c);
  auto [z, offset] = qr.rotate(y, c);
  qr_ops += c.ops();
  return Rotated{qr.R(), std::move(z), offset};
}

inline double conventional_radius(const RealSystem& sys, double alpha) {
  return alpha * static_cast<double>(sys.n_r()) * sys.noise_var;
}

/// FP/SE search with the doubling restart: when the sphere holds no lattice
/// point, d^2 is doubled and the search repeated (all work is counted).
inline DetectionResult conventional_sd(const RealSystem& sys, const SdConfig& cfg, SymbolOrder order) {
  DetectionResult res;
  const Rotated rot = rotate(sys.H, sys.y, res.qr_ops);
  auto* trace = cfg.record_trace ? &res.radius_trace : nullptr;
  SphereSearch search(rot.R, rot.z, sys.constellation, order, nullptr, res.ops, trace);
  const double floor = 1e-9 * (sys.y.squaredNorm() + 1.0);
  double d2 = conventional_radius(sys, cfg.alpha);
  if (d2 - rot.offset < 0.0) res.clamped = true;
  while (true) {
    SearchOutcome out = search.run(d2 - rot.offset);
    if (out.found) {
      res.s_hat = std::move(out.x);
      res.metric = out.metric;
      break;
    }
    ++res.restarts;
    d2 = std::max(2.0 * d2, rot.offset + floor);
  }
  return res;
}

}  // namespace detail

/// Fincke-Pohst sphere decoder (natural symbol order). Exact ML.
inline DetectionResult decode_fp(const RealSystem& sys, const SdConfig& cfg = {}) {
  return detail::conventional_sd(sys, cfg, SymbolOrder::Natural);
}

/// Schnorr-Euchner sphere decoder (center-outward order). Exact ML.
inline DetectionResult decode_se(const RealSystem& sys, const SdConfig& cfg = {}) {
  return detail::conventional_sd(sys, cfg, SymbolOrder::SchnorrEuchner);
}

/// Column order placing the largest |s_hat - s^[L]| at the leaf layer:
/// stable sort of e by decreasing value.
inline std::vector<Eigen::Index> layer_order_from_error(const Vector& e) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(e.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&e](Eigen::Index a, Eigen::Index b) { return e(a) > e(b); });
  return perm;
}

/// Everything the DL-aided decoders derive from one FS-Net pass.
struct FsNetSeed {
  std::vector<Eigen::Index> perm;  // column j of the working H is column perm[j]
  Vector soft;                     // s^[L] in working order
  Vector hard;                     // quantize(s^[L]) in working order
  detail::Rotated rot;             // QR of the permuted channel
  double phi_hat = 0.0;            // phi(hard) in the rotated frame
};

inline FsNetSeed fsnet_seed(const RealSystem& sys, const FsNetParams& params, bool layer_order,
                            DetectionResult& res) {
  if (params.dim() != sys.H.cols()) throw Error("FS-Net parameters do not match the system dimension");
  if (params.modulation != sys.constellation.kind())
    throw Error("FS-Net parameters were trained for a different modulation");
  OpCounter fs;
  const FsNetOutput out = forward(params, sys.H, sys.y, fs);
  res.fsnet_ops += fs.ops();
  FsNetSeed seed;
  const Eigen::Index m = sys.H.cols();
  if (layer_order) {
    const Vector e = (out.hard - out.soft).cwiseAbs();
    res.ops.add(static_cast<std::uint64_t>(m));
    seed.perm = layer_order_from_error(e);
  } else {
    seed.perm.resize(static_cast<std::size_t>(m));
    std::iota(seed.perm.begin(), seed.perm.end(), Eigen::Index{0});
  }
  seed.soft = permute(out.soft, seed.perm);
  seed.hard = permute(out.hard, seed.perm);
  seed.rot = detail::rotate(permute_columns(sys.H, seed.perm), sys.y, res.qr_ops);
  seed.phi_hat = ml_metric(seed.hard, seed.rot.z, seed.rot.R, res.ops);
  return seed;
}

/// Sphere search seeded by an initial solution: initial radius
/// min{alpha N_r sigma_n^2 - ||Q2^T y||^2, phi(x0)}. If the conventional
/// radius was the smaller one and turns out to hold no lattice point, the
/// search is repeated once with radius phi(x0), which always admits x0.
inline void seeded_search(const RealSystem& sys, const detail::Rotated& rot, const Vector& x0,
                          double phi0, SymbolOrder order, const Vector* anchor, double alpha,
                          bool record_trace, DetectionResult& res) {
  auto* trace = record_trace ? &res.radius_trace : nullptr;
  SphereSearch search(rot.R, rot.z, sys.constellation, order, anchor, res.ops, trace);
  const double conv = detail::conventional_radius(sys, alpha) - rot.offset;
  res.clamped = conv < 0.0;
  const SearchOutcome seed_point{true, x0, phi0};
  SearchOutcome out;
  if (phi0 <= conv) {
    out = search.run(phi0, seed_point);
  } else {
    out = search.run(conv);
    if (!out.found) {
      ++res.restarts;
      out = search.run(phi0, seed_point);
    }
  }
  res.s_hat = std::move(out.x);
  res.metric = out.metric;
}

/// FDL-SD: FS-Net initial solution, layer ordering by decreasing
/// |s_hat - s^[L]|, candidate ordering around s^[L] and initial radius
/// bounded by phi(s_hat). Returns the same symbols as decode_fp.
inline DetectionResult decode_fdl(const RealSystem& sys, const FsNetParams& params,
                                  const FdlSdConfig& cfg = {}) {
  DetectionResult res;
  const FsNetSeed seed = fsnet_seed(sys, params, cfg.layer_order, res);
  seeded_search(sys, seed.rot, seed.hard, seed.phi_hat, SymbolOrder::FdlNet, &seed.soft, cfg.alpha,
                cfg.record_trace, res);
  res.s_hat = unpermute(res.s_hat, seed.perm);
  return res;
}

/// SE sphere decoder initialized with the MMSE-OSIC solution.
inline DetectionResult decode_osic_sd(const RealSystem& sys, const SdConfig& cfg = {}) {
  DetectionResult res;
  OpCounter init;
  const Vector x0 = detect_osic(sys, init);
  res.init_ops = init.ops();
  res.ops += init;
  const detail::Rotated rot = detail::rotate(sys.H, sys.y, res.qr_ops);
  const double phi0 = ml_metric(x0, rot.z, rot.R, res.ops);
  seeded_search(sys, rot, x0, phi0, SymbolOrder::SchnorrEuchner, nullptr, cfg.alpha, cfg.record_trace, res);
  return res;
}

}  // namespace fastsd
