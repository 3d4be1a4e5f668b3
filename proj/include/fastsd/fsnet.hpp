#pragma once

// FS-Net: a deep-unfolded projected-gradient detector. Each of the L layers
// applies learned element-wise scalings to the previous estimate and to the
// residual z = H^T H s - H^T y, then projects both through the saturating
// piecewise-linear psi_t and sums them.

#include "fastsd/linalg.hpp"
#include "fastsd/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fastsd {

struct FsNetLayer {
  Vector w1, b1, w2, b2;
};

struct FsNetParams {
  Modulation modulation = Modulation::QPSK;
  double t = 0.5;
  std::vector<FsNetLayer> layers;

  Eigen::Index dim() const { return layers.empty() ? 0 : layers.front().w1.size(); }
  int num_layers() const { return static_cast<int>(layers.size()); }

  static FsNetParams zeros(Eigen::Index m, int L, Modulation mod, double t = 0.5) {
    FsNetParams p;
    p.modulation = mod;
    p.t = t;
    p.layers.assign(static_cast<std::size_t>(L),
                    FsNetLayer{Vector::Zero(m), Vector::Zero(m), Vector::Zero(m), Vector::Zero(m)});
    return p;
  }

  /// Visits every parameter vector in serialization order (w1, b1, w2, b2
  /// per layer).
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      f(l.w1);
      f(l.b1);
      f(l.w2);
      f(l.b2);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& l : layers) {
      f(l.w1);
      f(l.b1);
      f(l.w2);
      f(l.b2);
    }
  }

  void validate() const {
    if (!(t > 0.0)) throw Error("FsNetParams: t must be positive");
    const Eigen::Index m = dim();
    for_each([m](const Vector& v) {
      if (v.size() != m) throw Error("FsNetParams: inconsistent vector lengths");
    });
  }
};

inline bool operator==(const FsNetParams& a, const FsNetParams& b) {
  if (a.modulation != b.modulation || a.t != b.t || a.layers.size() != b.layers.size())
    return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.w1 != y.w1 || x.b1 != y.b1 || x.w2 != y.w2 || x.b2 != y.b2) return false;
  }
  return true;
}

/// psi_t(x) = -q + (1/t) sum_{i in Omega} [relu(x + i + t) - relu(x + i - t)].
inline double psi_t(double x, const Constellation& c, double t) {
  double acc = 0.0;
  for (double i : c.omega())
    acc += std::max(0.0, x + i + t) - std::max(0.0, x + i - t);
  const double q = c.q();
  return std::clamp(-q + acc / std::abs(t), -q, q);
}

/// Derivative of psi_t; at the kinks the left limit is used.
inline double psi_t_grad(double x, const Constellation& c, double t) {
  int active = 0;
  for (double i : c.omega()) {
    if (x + i + t > 0.0) ++active;
    if (x + i - t > 0.0) --active;
  }
  return active / std::abs(t);
}

/// Closed-form operation count of one forward pass:
/// M(2N-1) for H^T y, M^2(2N-1) for H^T H and 2M^2 + 5M per layer.
inline std::uint64_t fsnet_op_count(std::uint64_t m, std::uint64_t n, std::uint64_t L) {
  return m * (2 * n - 1) + m * m * (2 * n - 1) + L * (2 * m * m + 5 * m);
}

struct ForwardTrace {
  Matrix HtH;
  Vector Hty;
  std::vector<Vector> s;   // s[0] = 0, s[l] = output of layer l
  std::vector<Vector> z;   // residual entering layer l (index l-1)
  std::vector<Vector> a1;  // w1 .* s[l-1] + b1
  std::vector<Vector> a2;  // w2 .* z + b2

  int num_layers() const { return static_cast<int>(z.size()); }
};

struct FsNetOutput {
  Vector soft;  // s^[L]
  Vector hard;  // quantize(s^[L])
  ForwardTrace trace;
};

inline FsNetOutput forward(const FsNetParams& p, const Matrix& H, const Vector& y,
                           OpCounter& counter) {
  const Eigen::Index m = H.cols();
  const Eigen::Index n = H.rows();
  require_shape(p.dim() == m, "FS-Net dimension vs channel columns");
  require_shape(y.size() == n, "received vector length");
  const Constellation c(p.modulation);
  const int L = p.num_layers();

  FsNetOutput out;
  auto& tr = out.trace;
  tr.HtH.noalias() = H.transpose() * H;
  tr.Hty.noalias() = H.transpose() * y;
  tr.s.reserve(static_cast<std::size_t>(L) + 1);
  tr.s.push_back(Vector::Zero(m));
  for (int l = 0; l < L; ++l) {
    const auto& layer = p.layers[static_cast<std::size_t>(l)];
    const Vector& prev = tr.s.back();
    Vector z = tr.HtH * prev - tr.Hty;
    Vector a1 = layer.w1.cwiseProduct(prev) + layer.b1;
    Vector a2 = layer.w2.cwiseProduct(z) + layer.b2;
    Vector next(m);
    for (Eigen::Index i = 0; i < m; ++i) next(i) = psi_t(a1(i), c, p.t) + psi_t(a2(i), c, p.t);
    tr.z.push_back(std::move(z));
    tr.a1.push_back(std::move(a1));
    tr.a2.push_back(std::move(a2));
    tr.s.push_back(std::move(next));
  }
  const auto total = fsnet_op_count(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(n),
                                    static_cast<std::uint64_t>(L));
  const auto mm = static_cast<std::uint64_t>(m);
  const auto nn = static_cast<std::uint64_t>(n);
  // Multiplications: M N + M^2 N for the products, M^2 + 2M per layer.
  const std::uint64_t muls = mm * nn + mm * mm * nn + static_cast<std::uint64_t>(L) * (mm * mm + 2 * mm);
  counter.mul(muls);
  counter.add(total - muls);

  out.soft = tr.s.back();
  out.hard = quantize(out.soft, c);
  return out;
}

inline FsNetOutput forward(const FsNetParams& p, const Matrix& H, const Vector& y) {
  OpCounter c;
  return forward(p, H, y, c);
}

namespace detail {

inline double correlation_penalty(const Vector& s, const Vector& est) {
  const double ns = s.norm();
  const double ne = est.norm();
  if (ne == 0.0 || ns == 0.0) return 1.0;
  return 1.0 - std::abs(s.dot(est)) / (ns * ne);
}

}  // namespace detail

/// Sum over layers of log(l) * (||s - s^[l]||^2 + xi * r(s^[l], s)).
inline double loss(const ForwardTrace& tr, const Vector& s_true, double xi) {
  double total = 0.0;
  for (int l = 1; l <= tr.num_layers(); ++l) {
    const Vector& est = tr.s[static_cast<std::size_t>(l)];
    const double w = std::log(static_cast<double>(l));
    if (w == 0.0) continue;
    total += w * ((s_true - est).squaredNorm() + xi * detail::correlation_penalty(s_true, est));
  }
  return total;
}

/// Reverse-mode gradient of loss() w.r.t. every weight and bias, returned
/// with the same layout as the parameters.
inline FsNetParams backward(const FsNetParams& p, const ForwardTrace& tr, const Vector& s_true,
                            double xi) {
  const int L = tr.num_layers();
  const Eigen::Index m = p.dim();
  require_shape(L == p.num_layers(), "trace length vs parameter layers");
  require_shape(s_true.size() == m, "label length");
  const Constellation c(p.modulation);
  FsNetParams g = FsNetParams::zeros(m, L, p.modulation, p.t);
  const double ns = s_true.norm();

  Vector upstream = Vector::Zero(m);  // dLoss/ds^[l] from layers above l
  for (int l = L; l >= 1; --l) {
    const Vector& est = tr.s[static_cast<std::size_t>(l)];
    Vector grad = upstream;
    const double w = std::log(static_cast<double>(l));
    if (w != 0.0) {
      grad += w * 2.0 * (est - s_true);
      const double ne = est.norm();
      if (xi != 0.0 && ne > 0.0 && ns > 0.0) {
        const double corr = s_true.dot(est);
        const double sg = corr > 0.0 ? 1.0 : (corr < 0.0 ? -1.0 : 0.0);
        // r = 1 - |s.e| / (|s||e|)
        const Vector dr = -(sg * s_true / (ns * ne) - std::abs(corr) * est / (ns * ne * ne * ne));
        grad += w * xi * dr;
      }
    }
    const auto idx = static_cast<std::size_t>(l - 1);
    const auto& layer = p.layers[idx];
    auto& gl = g.layers[idx];
    Vector d1(m), d2(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      d1(i) = grad(i) * psi_t_grad(tr.a1[idx](i), c, p.t);
      d2(i) = grad(i) * psi_t_grad(tr.a2[idx](i), c, p.t);
    }
    gl.w1 = d1.cwiseProduct(tr.s[idx]);
    gl.b1 = d1;
    gl.w2 = d2.cwiseProduct(tr.z[idx]);
    gl.b2 = d2;
    // s^[l-1] feeds a1 directly and z through H^T H (symmetric).
    upstream = d1.cwiseProduct(layer.w1) + tr.HtH * d2.cwiseProduct(layer.w2);
  }
  return g;
}

/// Adam with bias correction; one moment pair per scalar parameter.
class Adam {
 public:
  explicit Adam(const FsNetParams& shape, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    shape.for_each([this](const Vector& v) {
      m_.push_back(Vector::Zero(v.size()));
      v_.push_back(Vector::Zero(v.size()));
    });
  }

  void step(FsNetParams& params, const FsNetParams& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::vector<const Vector*> gs;
    grad.for_each([&gs](const Vector& v) { gs.push_back(&v); });
    std::size_t k = 0;
    params.for_each([&](Vector& w) {
      const Vector& g = *gs[k];
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double mh = m_[k](i) / c1;
        const double vh = v_[k](i) / c2;
        w(i) -= lr * mh / (std::sqrt(vh) + eps_);
      }
      ++k;
    });
  }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Vector> m_, v_;
};

struct TrainConfig {
  int n_t = 16;
  int n_r = 16;
  Modulation modulation = Modulation::QPSK;
  int layers = 10;
  double t = 0.5;
  int epochs = 500;
  int batch_size = 500;
  double lr_start = 1e-3;
  double lr_decay = 0.97;
  /// Epochs between two decay steps; 1 decays every epoch.
  int lr_decay_every = 1;
  double xi = 0.1;
  double snr_lo_db = 8.0;
  double snr_hi_db = 14.0;
  double init_std = 0.01;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_t < 1 || n_r < n_t) throw Error("train: require 1 <= n_t <= n_r");
    if (layers < 1) throw Error("train: layers must be >= 1");
    if (!(t > 0)) throw Error("train: t must be positive");
    if (epochs < 1) throw Error("train: epochs must be >= 1");
    if (batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (!(lr_start >= 0)) throw Error("train: lr_start must be >= 0");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw Error("train: lr_decay must be in (0, 1]");
    if (lr_decay_every < 1) throw Error("train: lr_decay_every must be >= 1");
    if (!(xi >= 0)) throw Error("train: xi must be >= 0");
    if (!(snr_lo_db <= snr_hi_db)) throw Error("train: snr_lo_db must not exceed snr_hi_db");
    if (!(init_std >= 0)) throw Error("train: init_std must be >= 0");
  }

  double learning_rate(int epoch) const {
    return lr_start * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
  }
};

/// Gaussian initialization N(0, std^2) of all weights; biases start at 0.
inline FsNetParams init_params(Eigen::Index m, int L, Modulation mod, double t, double std,
                               Rng& rng) {
  FsNetParams p = FsNetParams::zeros(m, L, mod, t);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < m; ++i) l.w1(i) = std * gauss(rng);
    for (Eigen::Index i = 0; i < m; ++i) l.w2(i) = std * gauss(rng);
  }
  return p;
}

struct TrainResult {
  FsNetParams params;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Trains on a fresh random batch every epoch. Deterministic given cfg.seed.
/// `on_epoch` (optional) observes (epoch, mean loss, learning rate).
inline TrainResult train(const TrainConfig& cfg,
                         const std::function<void(int, double, double)>& on_epoch = {}) {
  cfg.validate();
  const Constellation c(cfg.modulation);
  const Eigen::Index m = 2 * cfg.n_t;
  Rng init_rng(derive_seed(cfg.seed, 0x1417));
  TrainResult res;
  res.params = init_params(m, cfg.layers, cfg.modulation, cfg.t, cfg.init_std, init_rng);
  Adam adam(res.params);
  Rng data_rng(derive_seed(cfg.seed, 0xda7a));
  std::uniform_real_distribution<double> snr_pick(cfg.snr_lo_db, cfg.snr_hi_db);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    FsNetParams grad = FsNetParams::zeros(m, cfg.layers, cfg.modulation, cfg.t);
    double batch_loss = 0.0;
    const double snr = snr_pick(data_rng);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const RealSystem sys = sample_instance(cfg.n_t, cfg.n_r, c, snr, data_rng);
      OpCounter unused;
      const FsNetOutput out = forward(res.params, sys.H, sys.y, unused);
      batch_loss += loss(out.trace, sys.s_true, cfg.xi);
      const FsNetParams g = backward(res.params, out.trace, sys.s_true, cfg.xi);
      for (std::size_t l = 0; l < grad.layers.size(); ++l) {
        grad.layers[l].w1 += g.layers[l].w1;
        grad.layers[l].b1 += g.layers[l].b1;
        grad.layers[l].w2 += g.layers[l].w2;
        grad.layers[l].b2 += g.layers[l].b2;
      }
    }
    const double inv = 1.0 / cfg.batch_size;
    grad.for_each([inv](Vector& v) { v *= inv; });
    const double mean_loss = batch_loss * inv;
    if (!std::isfinite(mean_loss)) throw Error("train: loss diverged at epoch " + std::to_string(epoch));
    const double lr = cfg.learning_rate(epoch);
    adam.step(res.params, grad, lr);
    res.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss, lr);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Weight file: little-endian, header {"FSNT", u32 version, u32 M, u32 L,
// u8 modulation, f64 t}, then per layer the vectors w1, b1, w2, b2 as f64.

inline constexpr std::array<char, 4> kWeightMagic{'F', 'S', 'N', 'T'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    os.put(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) throw Error("weight file truncated");
    bits |= static_cast<U>(static_cast<unsigned char>(ch)) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void save_params(const FsNetParams& p, const std::string& path) {
  p.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os.write(kWeightMagic.data(), kWeightMagic.size());
  detail::put_le<std::uint32_t>(os, kWeightVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dim()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.num_layers()));
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.modulation));
  detail::put_le<double>(os, p.t);
  p.for_each([&os](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_le<double>(os, v(i));
  });
  if (!os) throw Error("write to '" + path + "' failed");
}

/// Loads a weight file. When `expect_m` / `expect_mod` are given, a file
/// for a different shape is rejected rather than adapted.
inline FsNetParams load_params(const std::string& path, std::optional<Eigen::Index> expect_m = {},
                               std::optional<Modulation> expect_mod = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open weight file '" + path + "'");
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != 4 || magic != kWeightMagic) throw Error("'" + path + "' is not an FS-Net weight file");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kWeightVersion)
    throw Error("unsupported weight file version " + std::to_string(version));
  const auto m = detail::get_le<std::uint32_t>(is);
  const auto L = detail::get_le<std::uint32_t>(is);
  const auto mod = detail::get_le<std::uint8_t>(is);
  const auto t = detail::get_le<double>(is);
  if (m == 0 || L == 0 || m > (1u << 16) || L > (1u << 16)) throw Error("weight file header out of range");
  if (mod > static_cast<std::uint8_t>(Modulation::QAM64)) throw Error("weight file: bad modulation tag");
  if (!(t > 0)) throw Error("weight file: t must be positive");
  if (expect_m && *expect_m != static_cast<Eigen::Index>(m))
    throw Error("weight file is for M = " + std::to_string(m) + ", expected " + std::to_string(*expect_m));
  if (expect_mod && *expect_mod != static_cast<Modulation>(mod))
    throw Error("weight file modulation does not match the system");
  FsNetParams p = FsNetParams::zeros(m, static_cast<int>(L), static_cast<Modulation>(mod), t);
  p.for_each([&is](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = detail::get_le<double>(is);
  });
  if (is.peek() != std::char_traits<char>::eof()) throw Error("weight file has trailing bytes");
  return p;
}

}  // namespace fastsd
