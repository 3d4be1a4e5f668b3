#pragma once

// System model: constellations, complex/real MIMO instances, random instance
// generation with SNR accounting, hard quantization and Gray-labelled BER.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <bit>
#include <vector>

namespace fastsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modulation : std::uint8_t { QPSK = 0, QAM16 = 1, QAM64 = 2 };

inline std::string_view to_string(Modulation m) {
  switch (m) {
    case Modulation::QPSK: return "qpsk";
    case Modulation::QAM16: return "16qam";
    case Modulation::QAM64: return "64qam";
  }
  return "?";
}

inline Modulation parse_modulation(std::string_view s) {
  if (s == "qpsk" || s == "QPSK" || s == "4qam") return Modulation::QPSK;
  if (s == "16qam" || s == "QAM16" || s == "16-qam") return Modulation::QAM16;
  if (s == "64qam" || s == "QAM64" || s == "64-qam") return Modulation::QAM64;
  throw Error("unknown modulation '" + std::string(s) + "'");
}

/// Real-valued PAM alphabet of one real dimension of a square QAM
/// constellation, together with the saturation parameters of the FS-Net
/// projection psi_t. Alphabets are unnormalized odd integers, spacing 2.
class Constellation {
 public:
  explicit Constellation(Modulation kind) : kind_(kind) {
    int levels = 0;
    switch (kind) {
      case Modulation::QPSK: levels = 2; break;
      case Modulation::QAM16: levels = 4; break;
      case Modulation::QAM64: levels = 8; break;
    }
    for (int i = 0; i < levels; ++i) alphabet_.push_back(2.0 * i - (levels - 1));
    q_ = levels - 1;
    // Omega = {-(q-1), ..., q-1} in steps of 2.
    for (int v = -(q_ - 1); v <= q_ - 1; v += 2) omega_.push_back(static_cast<double>(v));
    bits_ = 0;
    while ((1 << bits_) < levels) ++bits_;
  }

  Modulation kind() const { return kind_; }
  const std::vector<double>& alphabet() const { return alphabet_; }
  std::size_t size() const { return alphabet_.size(); }
  double symbol(std::size_t i) const { return alphabet_[i]; }
  /// Saturation level q = max(alphabet).
  int q() const { return q_; }
  const std::vector<double>& omega() const { return omega_; }
  /// Bits carried by one real dimension.
  int bits_per_dim() const { return bits_; }
  /// Average energy E|s|^2 of one complex symbol (2 * mean of a^2).
  double symbol_energy() const {
    double e = 0.0;
    for (double a : alphabet_) e += a * a;
    return 2.0 * e / static_cast<double>(alphabet_.size());
  }

  /// Index of the alphabet symbol nearest to v. Ties go to the symbol with
  /// smaller magnitude, then to the smaller value.
  std::size_t nearest_index(double v) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
      const double d = std::abs(v - alphabet_[i]);
      if (d < best_d ||
          (d == best_d && std::abs(alphabet_[i]) < std::abs(alphabet_[best]))) {
        best = i;
        best_d = d;
      }
    }
    return best;
  }
  double nearest(double v) const { return alphabet_[nearest_index(v)]; }

  /// Index of an exact alphabet member; throws when v is not a symbol.
  std::size_t index_of(double v) const {
    for (std::size_t i = 0; i < alphabet_.size(); ++i)
      if (alphabet_[i] == v) return i;
    throw Error("value " + std::to_string(v) + " is not a constellation symbol");
  }

  /// Gray label of the i-th level (levels in increasing order).
  unsigned gray_label(std::size_t i) const {
    return static_cast<unsigned>(i ^ (i >> 1));
  }

 private:
  Modulation kind_;
  std::vector<double> alphabet_;
  std::vector<double> omega_;
  int q_ = 1;
  int bits_ = 1;
};

struct ComplexSystem {
  CMatrix H;  // N_r x N_t
  CVector s;  // N_t
  CVector n;  // N_r
  CVector y;  // N_r
};

/// Equivalent real-valued detection problem y = H s + n.
struct RealSystem {
  Matrix H;        // N x M, N = 2 N_r, M = 2 N_t
  Vector y;        // N
  Vector s_true;   // M, empty when the ground truth is unknown
  double noise_var = 0.0;  // sigma_n^2 per complex receive dimension
  Constellation constellation{Modulation::QPSK};

  Eigen::Index rows() const { return H.rows(); }
  Eigen::Index cols() const { return H.cols(); }
  /// Number of complex receive antennas.
  Eigen::Index n_r() const { return H.rows() / 2; }
  Eigen::Index n_t() const { return H.cols() / 2; }
};

inline RealSystem to_real(const ComplexSystem& sys, const Constellation& c,
                          double noise_var = 0.0) {
  const Eigen::Index nr = sys.H.rows();
  const Eigen::Index nt = sys.H.cols();
  RealSystem out{.H = Matrix(2 * nr, 2 * nt),
                 .y = Vector(2 * nr),
                 .s_true = Vector(2 * nt),
                 .noise_var = noise_var,
                 .constellation = c};
  out.H.topLeftCorner(nr, nt) = sys.H.real();
  out.H.topRightCorner(nr, nt) = -sys.H.imag();
  out.H.bottomLeftCorner(nr, nt) = sys.H.imag();
  out.H.bottomRightCorner(nr, nt) = sys.H.real();
  out.y << sys.y.real(), sys.y.imag();
  if (sys.s.size() == nt) {
    out.s_true << sys.s.real(), sys.s.imag();
  } else {
    out.s_true.resize(0);
  }
  return out;
}

/// Inverse of to_real on a real stacked vector [Re; Im].
inline CVector to_complex(const Vector& v) {
  const Eigen::Index n = v.size() / 2;
  CVector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = {v(i), v(n + i)};
  return out;
}

/// Recovers the complex channel from its real block form.
inline CMatrix to_complex(const Matrix& H) {
  const Eigen::Index nr = H.rows() / 2;
  const Eigen::Index nt = H.cols() / 2;
  CMatrix out(nr, nt);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < nt; ++j) out(i, j) = {H(i, j), H(nr + i, j)};
  return out;
}

/// sigma_n^2 such that N_t * sigma_t^2 / sigma_n^2 equals the requested SNR.
/// An infinite SNR yields a noiseless system.
inline double noise_variance(int n_t, double symbol_energy, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  if (!std::isfinite(snr_db)) throw Error("snr_db must be finite or +inf");
  return n_t * symbol_energy / std::pow(10.0, snr_db / 10.0);
}

inline double noise_variance(int n_t, const Constellation& c, double snr_db) {
  return noise_variance(n_t, c.symbol_energy(), snr_db);
}

/// Draws (H, s, n) with i.i.d. CN(0,1) channel taps, uniform symbols and
/// CN(0, sigma_n^2) noise from the given generator.
inline ComplexSystem sample_complex(int n_t, int n_r, const Constellation& c,
                                    double noise_var, Rng& rng) {
  if (n_t < 1 || n_r < n_t) throw Error("require 1 <= n_t <= n_r");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
  const double h_std = std::sqrt(0.5);
  const double n_std = std::sqrt(noise_var / 2.0);
  ComplexSystem sys;
  sys.H.resize(n_r, n_t);
  for (Eigen::Index j = 0; j < n_t; ++j)
    for (Eigen::Index i = 0; i < n_r; ++i) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      sys.H(i, j) = {h_std * re, h_std * im};
    }
  sys.s.resize(n_t);
  for (Eigen::Index i = 0; i < n_t; ++i) {
    const double re = c.symbol(pick(rng));
    const double im = c.symbol(pick(rng));
    sys.s(i) = {re, im};
  }
  sys.n.resize(n_r);
  for (Eigen::Index i = 0; i < n_r; ++i) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    sys.n(i) = {n_std * re, n_std * im};
  }
  sys.y = sys.H * sys.s + sys.n;
  return sys;
}

inline RealSystem sample_instance(int n_t, int n_r, const Constellation& c,
                                  double snr_db, Rng& rng) {
  const double nv = noise_variance(n_t, c, snr_db);
  return to_real(sample_complex(n_t, n_r, c, nv, rng), c, nv);
}

inline RealSystem sample_instance(int n_t, int n_r, const Constellation& c,
                                  double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  return sample_instance(n_t, n_r, c, snr_db, rng);
}

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

inline Vector quantize(const Vector& v, const Constellation& c) {
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = c.nearest(v(i));
  return out;
}

/// Number of differing bits under per-dimension Gray labelling.
inline std::size_t bit_errors(const Vector& detected, const Vector& s_true,
                              const Constellation& c) {
  if (detected.size() != s_true.size())
    throw Error("bit_errors: length mismatch");
  std::size_t errs = 0;
  for (Eigen::Index i = 0; i < detected.size(); ++i) {
    const unsigned a = c.gray_label(c.index_of(c.nearest(detected(i))));
    const unsigned b = c.gray_label(c.index_of(c.nearest(s_true(i))));
    errs += static_cast<std::size_t>(std::popcount(a ^ b));
  }
  return errs;
}

inline double ber(const Vector& detected, const Vector& s_true,
                  const Constellation& c) {
  if (detected.size() == 0) throw Error("ber: empty vectors");
  return static_cast<double>(bit_errors(detected, s_true, c)) /
         static_cast<double>(detected.size() * c.bits_per_dim());
}

}  // namespace fastsd
