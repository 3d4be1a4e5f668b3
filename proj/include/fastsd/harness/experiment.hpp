#pragma once

// Seeded Monte-Carlo runs: every detector sees the same (H, s, n) per trial.

#include "fastsd/baselines.hpp"
#include "fastsd/fsnet.hpp"
#include "fastsd/harness/config.hpp"
#include "fastsd/kbest.hpp"
#include "fastsd/sphere.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace fastsd::harness {

inline constexpr std::string_view kCsvHeader =
    "snr_db,detector,trial,bit_errors,bits,adds,muls,visited_nodes,restarts,qr_ops,fsnet_ops,wall_ns";

struct TrialRecord {
  double snr_db = 0.0;
  std::string detector;
  int trial = 0;
  std::size_t bit_errors = 0;
  std::size_t bits = 0;
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t visited_nodes = 0;
  std::uint64_t restarts = 0;
  std::uint64_t qr_ops = 0;
  std::uint64_t fsnet_ops = 0;
  std::uint64_t wall_ns = 0;

  std::uint64_t total_ops() const { return adds + muls + qr_ops + fsnet_ops; }
};

/// Seed of trial `trial` at SNR point `snr_index`.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t snr_index, int trial) {
  return derive_seed(seed, snr_index, static_cast<std::uint64_t>(trial));
}

inline RealSystem trial_instance(const ExperimentConfig& cfg, std::size_t snr_index, int trial) {
  return sample_instance(cfg.n_t, cfg.n_r, cfg.constellation(), cfg.snr_db.at(snr_index),
                         trial_seed(cfg.seed, snr_index, trial));
}

/// Runs one configured detector. Linear detectors (zf, mmse) are not
/// instrumented and report zero operations.
inline DetectionResult run_detector(const DetectorSpec& d, const RealSystem& sys) {
  const auto need_params = [&]() -> const FsNetParams& {
    if (!d.params) throw Error("detector '" + d.id + "' has no loaded FS-Net weights");
    return *d.params;
  };
  DetectionResult res;
  switch (d.kind) {
    case DetectorKind::ZF:
      res.s_hat = detect_zf(sys);
      return res;
    case DetectorKind::MMSE:
      res.s_hat = detect_mmse(sys);
      return res;
    case DetectorKind::OSIC:
      res.s_hat = detect_osic(sys, res.ops);
      return res;
    case DetectorKind::ML:
      return detect_ml_bruteforce(sys);
    case DetectorKind::FsNet: {
      OpCounter c;
      res.s_hat = forward(need_params(), sys.H, sys.y, c).hard;
      res.fsnet_ops = c.ops();
      return res;
    }
    case DetectorKind::FpSd:
      return decode_fp(sys, SdConfig{d.alpha, true});
    case DetectorKind::SeSd:
      return decode_se(sys, SdConfig{d.alpha, true});
    case DetectorKind::OsicSd:
      return decode_osic_sd(sys, SdConfig{d.alpha, true});
    case DetectorKind::FdlSd:
      return decode_fdl(sys, need_params(), FdlSdConfig{d.alpha, d.layer_order, true});
    case DetectorKind::Ksd:
      return decode_ksd(sys, d.K);
    case DetectorKind::FdlKsd:
      return decode_fdl_ksd(sys, need_params(), KbestConfig{d.K, d.early_reject, d.layer_order, d.alpha});
  }
  throw Error("unhandled detector kind");
}

/// Radius sequence (visited node index, d_M^2) of a depth-first decoder, or
/// the per-layer best partial metric of a K-best decoder.
inline std::vector<RadiusStep> convergence_trace(const RealSystem& sys, const DetectorSpec& d) {
  if (!kind_info(d.kind).tree_search)
    throw Error("detector '" + d.id + "' is not a tree search and has no convergence trace");
  return run_detector(d, sys).radius_trace;
}

struct ExperimentResult {
  std::vector<TrialRecord> records;  // snr-major, then trial, then detector order
};

/// Runs all (snr, trial, detector) combinations. With threads > 1 trials are
/// spread over a worker pool; records are stored by index, so the output is
/// independent of the worker count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const std::size_t n_det = cfg.detectors.size();
  const std::size_t n_snr = cfg.snr_db.size();
  const auto n_trials = static_cast<std::size_t>(cfg.trials);
  if (n_det == 0 || n_snr == 0 || cfg.trials < 1) throw Error("run_experiment: configuration not prepared");
  const std::size_t jobs = n_snr * n_trials;
  ExperimentResult out;
  out.records.resize(jobs * n_det);

  const auto run_job = [&](std::size_t job) {
    const std::size_t si = job / n_trials;
    const int trial = static_cast<int>(job % n_trials);
    const RealSystem sys = trial_instance(cfg, si, trial);
    const Constellation& c = sys.constellation;
    for (std::size_t di = 0; di < n_det; ++di) {
      const auto t0 = std::chrono::steady_clock::now();
      const DetectionResult r = run_detector(cfg.detectors[di], sys);
      const auto t1 = std::chrono::steady_clock::now();
      TrialRecord& rec = out.records[job * n_det + di];
      rec.snr_db = cfg.snr_db[si];
      rec.detector = cfg.detectors[di].id;
      rec.trial = trial;
      rec.bit_errors = bit_errors(r.s_hat, sys.s_true, c);
      rec.bits = static_cast<std::size_t>(sys.s_true.size()) * static_cast<std::size_t>(c.bits_per_dim());
      rec.adds = r.ops.adds;
      rec.muls = r.ops.muls;
      rec.visited_nodes = r.ops.visited_nodes;
      rec.restarts = r.restarts;
      rec.qr_ops = r.qr_ops;
      rec.fsnet_ops = r.fsnet_ops;
      rec.wall_ns = cfg.wall_time
                        ? static_cast<std::uint64_t>(
                              std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count())
                        : 0;
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, cfg.threads));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs; ++j) run_job(j);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, jobs); ++w) {
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < jobs; j = next++) {
        try {
          run_job(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next = jobs;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_number failed");
  return std::string(buf, p);
}

inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << format_number(r.snr_db) << ',' << r.detector << ',' << r.trial << ',' << r.bit_errors << ',' << r.bits
       << ',' << r.adds << ',' << r.muls << ',' << r.visited_nodes << ',' << r.restarts << ',' << r.qr_ops << ','
       << r.fsnet_ops << ',' << r.wall_ns << '\n';
  }
}

struct SummaryRow {
  double snr_db = 0.0;
  std::string detector;
  int trials = 0;
  std::size_t bit_errors = 0;
  std::size_t bits = 0;
  double mean_search_ops = 0.0;  // adds + muls
  double mean_total_ops = 0.0;   // adds + muls + qr_ops + fsnet_ops
  double mean_visited_nodes = 0.0;
  std::uint64_t restarts = 0;

  double ber() const { return bits == 0 ? 0.0 : static_cast<double>(bit_errors) / static_cast<double>(bits); }
};

inline std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::vector<SummaryRow> rows;
  const std::size_t n_det = cfg.detectors.size();
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    for (std::size_t di = 0; di < n_det; ++di) {
      SummaryRow row;
      row.snr_db = cfg.snr_db[si];
      row.detector = cfg.detectors[di].id;
      for (int t = 0; t < cfg.trials; ++t) {
        const auto job = si * static_cast<std::size_t>(cfg.trials) + static_cast<std::size_t>(t);
        const TrialRecord& r = res.records.at(job * n_det + di);
        ++row.trials;
        row.bit_errors += r.bit_errors;
        row.bits += r.bits;
        row.mean_search_ops += static_cast<double>(r.adds + r.muls);
        row.mean_total_ops += static_cast<double>(r.total_ops());
        row.mean_visited_nodes += static_cast<double>(r.visited_nodes);
        row.restarts += r.restarts;
      }
      row.mean_search_ops /= row.trials;
      row.mean_total_ops /= row.trials;
      row.mean_visited_nodes /= row.trials;
      rows.push_back(row);
    }
  }
  return rows;
}

inline const char* on_off(bool b) { return b ? "on" : "off"; }

/// Human-readable summary: run parameters, then one line per (snr, detector).
inline void write_summary(std::ostream& os, const ExperimentConfig& cfg, const ExperimentResult& res) {
  os << "# system " << cfg.n_t << "x" << cfg.n_r << " " << to_string(cfg.modulation) << ", trials per SNR "
     << cfg.trials << ", seed " << cfg.seed << "\n";
  if (cfg.train.present) os << "# training xi " << format_number(cfg.train.cfg.xi) << "\n";
  for (const auto& d : cfg.detectors) {
    os << "# detector " << d.id << ": kind " << kind_info(d.kind).name;
    switch (d.kind) {
      case DetectorKind::FpSd:
      case DetectorKind::SeSd:
      case DetectorKind::OsicSd:
        os << ", alpha " << format_number(d.alpha);
        break;
      case DetectorKind::FdlSd:
        os << ", alpha " << format_number(d.alpha) << ", layer_order " << on_off(d.layer_order);
        break;
      case DetectorKind::Ksd:
        os << ", K " << d.K;
        break;
      case DetectorKind::FdlKsd:
        os << ", K " << d.K << ", alpha " << format_number(d.alpha) << ", early_reject " << on_off(d.early_reject)
           << ", layer_order " << on_off(d.layer_order);
        break;
      default:
        break;
    }
    if (!d.weights.empty()) os << ", weights " << d.weights;
    os << "\n";
  }
  os << "snr_db,detector,trials,bit_errors,bits,ber,mean_search_ops,mean_total_ops,mean_visited_nodes,restarts\n";
  for (const auto& r : summarize(cfg, res)) {
    os << format_number(r.snr_db) << ',' << r.detector << ',' << r.trials << ',' << r.bit_errors << ',' << r.bits
       << ',' << format_number(r.ber()) << ',' << format_number(r.mean_search_ops) << ','
       << format_number(r.mean_total_ops) << ',' << format_number(r.mean_visited_nodes) << ',' << r.restarts
       << '\n';
  }
}

/// Convergence traces of every tree-search detector for every trial.
inline void write_traces(std::ostream& os, const ExperimentConfig& cfg) {
  os << "snr_db,detector,trial,step,visited_nodes,radius_sq\n";
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    for (int t = 0; t < cfg.trials; ++t) {
      const RealSystem sys = trial_instance(cfg, si, t);
      for (const auto& d : cfg.detectors) {
        if (!kind_info(d.kind).tree_search) continue;
        const auto trace = convergence_trace(sys, d);
        for (std::size_t k = 0; k < trace.size(); ++k) {
          os << format_number(cfg.snr_db[si]) << ',' << d.id << ',' << t << ',' << k << ',' << trace[k].node
             << ',' << format_number(trace[k].radius_sq) << '\n';
        }
      }
    }
  }
}

}  // namespace fastsd::harness
