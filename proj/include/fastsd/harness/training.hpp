#pragma once

// Training front end: trains FS-Net from a [train] section and writes the
// weight file plus a JSON-lines loss log.

#include "fastsd/fsnet.hpp"
#include "fastsd/harness/config.hpp"

#include <fstream>
#include <ostream>
#include <string>

#include "json.hpp"

namespace fastsd::harness {

inline nlohmann::json train_config_json(const TrainConfig& t) {
  return {{"n_t", t.n_t},
          {"n_r", t.n_r},
          {"modulation", std::string(to_string(t.modulation))},
          {"layers", t.layers},
          {"t", t.t},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr_start", t.lr_start},
          {"lr_decay", t.lr_decay},
          {"lr_decay_every", t.lr_decay_every},
          {"xi", t.xi},
          {"snr_lo_db", t.snr_lo_db},
          {"snr_hi_db", t.snr_hi_db},
          {"init_std", t.init_std},
          {"seed", t.seed}};
}

/// Trains with the config's [train] section and saves the weights to
/// `weights_out`. The loss log goes to the section's `loss_log` key, or to
/// `<weights_out>.loss.jsonl`. Progress lines go to `progress` if given.
inline TrainResult train_cli(const ExperimentConfig& cfg, const std::string& weights_out,
                             std::ostream* progress = nullptr) {
  if (!cfg.train.present) throw ConfigError(cfg.origin, 0, "no [train] section");
  const TrainConfig& t = cfg.train.cfg;
  const std::string log_path = cfg.train.loss_log.empty() ? weights_out + ".loss.jsonl" : cfg.train.loss_log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw Error("cannot open loss log '" + log_path + "'");
  log << nlohmann::json{{"config", train_config_json(t)}}.dump() << '\n';
  const int every = std::max(1, t.epochs / 20);
  TrainResult res = train(t, [&](int epoch, double loss_value, double lr) {
    log << nlohmann::json{{"epoch", epoch}, {"loss", loss_value}, {"lr", lr}}.dump() << '\n';
    if (progress && (epoch % every == 0 || epoch + 1 == t.epochs))
      *progress << "epoch " << epoch << " loss " << loss_value << " lr " << lr << '\n';
  });
  save_params(res.params, weights_out);
  return res;
}

}  // namespace fastsd::harness
