#pragma once

// Experiment configuration: a flat key = value text format with sections.
//
//   # comment                       ('#' starts a comment anywhere on a line)
//   n_t = 16                        top-level keys describe the system and run
//   snr_db = 2:2:12                 list "a, b, c" or range "lo:step:hi"
//   [detector fdl-sd]               one section per detector, in output order
//   id = fdl                        optional display name (defaults to kind)
//   weights = fsnet_16x16.bin       resolved relative to the config file
//   [train]                         FS-Net training settings
//   epochs = 2000

#include "fastsd/fsnet.hpp"
#include "fastsd/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fastsd::harness {

/// Configuration error carrying the origin and line number in its message.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& origin, int line, const std::string& msg)
      : Error(origin + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class DetectorKind { ZF, MMSE, OSIC, ML, FsNet, FpSd, SeSd, OsicSd, FdlSd, Ksd, FdlKsd };

struct KindInfo {
  DetectorKind kind;
  std::string_view name;
  bool needs_weights;
  bool tree_search;
};

inline constexpr KindInfo kKinds[] = {
    {DetectorKind::ZF, "zf", false, false},          {DetectorKind::MMSE, "mmse", false, false},
    {DetectorKind::OSIC, "osic", false, false},      {DetectorKind::ML, "ml", false, false},
    {DetectorKind::FsNet, "fsnet", true, false},     {DetectorKind::FpSd, "fp-sd", false, true},
    {DetectorKind::SeSd, "se-sd", false, true},      {DetectorKind::OsicSd, "osic-sd", false, true},
    {DetectorKind::FdlSd, "fdl-sd", true, true},     {DetectorKind::Ksd, "ksd", false, true},
    {DetectorKind::FdlKsd, "fdl-ksd", true, true},
};

inline const KindInfo& kind_info(DetectorKind k) {
  for (const auto& info : kKinds)
    if (info.kind == k) return info;
  throw Error("unknown detector kind");
}

inline std::optional<DetectorKind> parse_kind(std::string_view s) {
  for (const auto& info : kKinds)
    if (info.name == s) return info.kind;
  return std::nullopt;
}

struct DetectorSpec {
  DetectorKind kind = DetectorKind::ZF;
  std::string id;
  int line = 0;
  double alpha = 2.0;
  int K = 16;
  bool early_reject = true;
  bool layer_order = true;
  std::string weights;  // absolute or relative to the working directory
  std::shared_ptr<const FsNetParams> params;
};

struct TrainSection {
  bool present = false;
  int line = 0;
  TrainConfig cfg;
  bool seed_set = false;
  std::string loss_log;
};

struct ExperimentConfig {
  std::string origin = "<config>";
  int n_t = 4;
  int n_r = 4;
  Modulation modulation = Modulation::QPSK;
  std::vector<double> snr_db{10.0};
  int trials = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  bool wall_time = false;
  std::vector<DetectorSpec> detectors;
  TrainSection train;
  std::map<std::string, int> key_lines;  // top-level key -> line number

  Constellation constellation() const { return Constellation(modulation); }
  int line_of(const std::string& key) const {
    const auto it = key_lines.find(key);
    return it == key_lines.end() ? 0 : it->second;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class ValueParser {
 public:
  ValueParser(const std::string& origin, int line, std::string_view key)
      : origin_(origin), line_(line), key_(key) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(origin_, line_, "key '" + std::string(key_) + "': " + what);
  }

  long long integer(std::string_view v, long long lo, long long hi) const {
    long long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) fail("expected an integer, got '" + std::string(v) + "'");
    if (out < lo || out > hi)
      fail("value " + std::string(v) + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return out;
  }

  std::uint64_t unsigned_integer(std::string_view v) const {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      fail("expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
  }

  double real(std::string_view v) const {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || std::isnan(out))
      fail("expected a number, got '" + std::string(v) + "'");
    return out;
  }

  bool boolean(std::string_view v) const {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail("expected true/false, got '" + std::string(v) + "'");
  }

  /// "a, b, c" or "lo:step:hi" (inclusive).
  std::vector<double> real_list(std::string_view v) const {
    std::vector<double> out;
    if (v.find(':') != std::string_view::npos) {
      std::vector<double> parts;
      std::size_t start = 0;
      while (true) {
        const auto colon = v.find(':', start);
        parts.push_back(real(trim(v.substr(start, colon - start))));
        if (colon == std::string_view::npos) break;
        start = colon + 1;
      }
      if (parts.size() != 3) fail("range must be lo:step:hi");
      const double lo = parts[0], step = parts[1], hi = parts[2];
      if (!(step > 0) || !(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi)) fail("invalid range");
      for (int i = 0;; ++i) {
        const double x = lo + i * step;
        if (x > hi + 1e-9 * std::max(1.0, std::abs(hi))) break;
        out.push_back(x);
        if (out.size() > 10000) fail("range has too many points");
      }
      return out;
    }
    std::size_t start = 0;
    while (true) {
      const auto comma = v.find(',', start);
      const auto item = trim(v.substr(start, comma - start));
      if (item.empty()) fail("empty list element");
      out.push_back(real(item));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }

 private:
  const std::string& origin_;
  int line_;
  std::string_view key_;
};

inline std::string resolve_path(const std::filesystem::path& base_dir, std::string_view v) {
  std::filesystem::path p{std::string(v)};
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p.lexically_normal().string();
}

}  // namespace detail

/// Parses configuration text. Relative paths are resolved against `base_dir`.
inline ExperimentConfig parse_config(std::string_view text, const std::string& origin = "<config>",
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  cfg.origin = origin;
  enum class Section { Top, Detector, Train } section = Section::Top;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin, line_no, "unterminated section header");
      const std::string_view inner = detail::trim(line.substr(1, line.size() - 2));
      seen.clear();
      if (inner == "train") {
        if (cfg.train.present) throw ConfigError(origin, line_no, "duplicate [train] section");
        cfg.train.present = true;
        cfg.train.line = line_no;
        section = Section::Train;
        continue;
      }
      if (inner.substr(0, 8) == "detector") {
        const std::string_view kind_name = detail::trim(inner.substr(8));
        if (kind_name.empty()) throw ConfigError(origin, line_no, "detector section needs a kind");
        const auto kind = parse_kind(kind_name);
        if (!kind) throw ConfigError(origin, line_no, "unknown detector kind '" + std::string(kind_name) + "'");
        DetectorSpec spec;
        spec.kind = *kind;
        spec.id = std::string(kind_name);
        spec.line = line_no;
        cfg.detectors.push_back(spec);
        section = Section::Detector;
        continue;
      }
      throw ConfigError(origin, line_no, "unknown section '" + std::string(inner) + "'");
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(origin, line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin, line_no, "missing key");
    if (value.empty()) throw ConfigError(origin, line_no, "key '" + key + "': missing value");
    if (!seen.insert(key).second) throw ConfigError(origin, line_no, "duplicate key '" + key + "'");
    const detail::ValueParser vp(origin, line_no, key);

    switch (section) {
      case Section::Top:
        cfg.key_lines[key] = line_no;
        if (key == "n_t") cfg.n_t = static_cast<int>(vp.integer(value, 1, 64));
        else if (key == "n_r") cfg.n_r = static_cast<int>(vp.integer(value, 1, 64));
        else if (key == "modulation") {
          try {
            cfg.modulation = parse_modulation(value);
          } catch (const Error&) {
            vp.fail("unknown modulation '" + std::string(value) + "'");
          }
        } else if (key == "snr_db") cfg.snr_db = vp.real_list(value);
        else if (key == "trials") cfg.trials = static_cast<int>(vp.integer(value, -1'000'000'000, 1'000'000'000));
        else if (key == "seed") cfg.seed = vp.unsigned_integer(value);
        else if (key == "threads") cfg.threads = static_cast<int>(vp.integer(value, 1, 1024));
        else if (key == "wall_time") cfg.wall_time = vp.boolean(value);
        else throw ConfigError(origin, line_no, "unknown key '" + key + "'");
        break;
      case Section::Detector: {
        DetectorSpec& d = cfg.detectors.back();
        const bool sd = d.kind == DetectorKind::FpSd || d.kind == DetectorKind::SeSd ||
                        d.kind == DetectorKind::OsicSd || d.kind == DetectorKind::FdlSd;
        const bool kbest = d.kind == DetectorKind::Ksd || d.kind == DetectorKind::FdlKsd;
        if (key == "id") d.id = std::string(value);
        else if (key == "alpha" && (sd || d.kind == DetectorKind::FdlKsd)) {
          d.alpha = vp.real(value);
          if (!(d.alpha > 0) || !std::isfinite(d.alpha)) vp.fail("alpha must be positive");
        } else if (key == "K" && kbest) d.K = static_cast<int>(vp.integer(value, 1, 1 << 20));
        else if (key == "early_reject" && d.kind == DetectorKind::FdlKsd) d.early_reject = vp.boolean(value);
        else if (key == "layer_order" && (d.kind == DetectorKind::FdlKsd || d.kind == DetectorKind::FdlSd))
          d.layer_order = vp.boolean(value);
        else if (key == "weights" && kind_info(d.kind).needs_weights) d.weights = detail::resolve_path(base_dir, value);
        else
          throw ConfigError(origin, line_no,
                            "key '" + key + "' is not valid for detector '" + std::string(kind_info(d.kind).name) + "'");
        break;
      }
      case Section::Train: {
        TrainConfig& t = cfg.train.cfg;
        if (key == "layers") t.layers = static_cast<int>(vp.integer(value, 1, 1000));
        else if (key == "t") t.t = vp.real(value);
        else if (key == "epochs") t.epochs = static_cast<int>(vp.integer(value, 1, 100'000'000));
        else if (key == "batch_size") t.batch_size = static_cast<int>(vp.integer(value, 1, 100'000'000));
        else if (key == "lr_start") t.lr_start = vp.real(value);
        else if (key == "lr_decay") t.lr_decay = vp.real(value);
        else if (key == "lr_decay_every") t.lr_decay_every = static_cast<int>(vp.integer(value, 1, 100'000'000));
        else if (key == "xi") t.xi = vp.real(value);
        else if (key == "snr_lo_db") t.snr_lo_db = vp.real(value);
        else if (key == "snr_hi_db") t.snr_hi_db = vp.real(value);
        else if (key == "init_std") t.init_std = vp.real(value);
        else if (key == "seed") {
          t.seed = vp.unsigned_integer(value);
          cfg.train.seed_set = true;
        } else if (key == "loss_log") cfg.train.loss_log = detail::resolve_path(base_dir, value);
        else throw ConfigError(origin, line_no, "unknown key '" + key + "' in [train]");
        break;
      }
    }
  }

  if (cfg.n_r < cfg.n_t) throw ConfigError(origin, cfg.line_of("n_r"), "key 'n_r': must be >= n_t");
  if (cfg.train.present) {
    cfg.train.cfg.n_t = cfg.n_t;
    cfg.train.cfg.n_r = cfg.n_r;
    cfg.train.cfg.modulation = cfg.modulation;
    if (!cfg.train.seed_set) cfg.train.cfg.seed = cfg.seed;
    try {
      cfg.train.cfg.validate();
    } catch (const Error& e) {
      throw ConfigError(origin, cfg.train.line, e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path, 0, "cannot open config file");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path, std::filesystem::path(path).parent_path());
}

/// Checks what a simulation needs and loads the FS-Net weights of every
/// DL-aided detector.
inline void prepare_simulation(ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError(cfg.origin, cfg.line_of("trials"), "key 'trials': must be >= 1");
  if (cfg.snr_db.empty()) throw ConfigError(cfg.origin, cfg.line_of("snr_db"), "key 'snr_db': at least one SNR is required");
  for (double s : cfg.snr_db)
    if (std::isnan(s) || s == -std::numeric_limits<double>::infinity())
      throw ConfigError(cfg.origin, cfg.line_of("snr_db"), "key 'snr_db': invalid SNR");
  if (cfg.detectors.empty()) throw ConfigError(cfg.origin, 0, "no [detector ...] section");
  std::set<std::string> ids;
  const Eigen::Index m = 2 * cfg.n_t;
  for (auto& d : cfg.detectors) {
    if (!ids.insert(d.id).second) throw ConfigError(cfg.origin, d.line, "duplicate detector id '" + d.id + "'");
    if (d.id.find_first_of(",\"\n") != std::string::npos)
      throw ConfigError(cfg.origin, d.line, "detector id must not contain commas or quotes");
    if (d.kind == DetectorKind::ML) {
      const double space = std::pow(static_cast<double>(cfg.constellation().size()), static_cast<double>(m));
      if (space > static_cast<double>(1u << 20))
        throw ConfigError(cfg.origin, d.line, "exhaustive ML search space exceeds 2^20");
    }
    if (!kind_info(d.kind).needs_weights) continue;
    if (d.weights.empty()) throw ConfigError(cfg.origin, d.line, "detector '" + d.id + "' requires 'weights'");
    if (!std::filesystem::exists(d.weights))
      throw ConfigError(cfg.origin, d.line, "weights file '" + d.weights + "' does not exist");
    try {
      d.params = std::make_shared<const FsNetParams>(load_params(d.weights, m, cfg.modulation));
    } catch (const Error& e) {
      throw ConfigError(cfg.origin, d.line, e.what());
    }
  }
}

}  // namespace fastsd::harness
