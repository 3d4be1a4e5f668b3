// Command-line front end: simulate, train and trace.

#include "fastsd/harness/config.hpp"
#include "fastsd/harness/experiment.hpp"
#include "fastsd/harness/training.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace {

using namespace fastsd;

int simulate(const std::string& config_path, const std::string& out_path, const std::string& summary_path) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  harness::prepare_simulation(cfg);
  const harness::ExperimentResult res = harness::run_experiment(cfg);
  std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw Error("cannot open '" + out_path + "' for writing");
  harness::write_csv(csv, res.records);
  csv.close();
  if (!csv) throw Error("failed writing '" + out_path + "'");

  std::ostringstream summary;
  harness::write_summary(summary, cfg, res);
  std::cout << summary.str();
  const std::string sp = summary_path.empty() ? out_path + ".summary.txt" : summary_path;
  std::ofstream so(sp, std::ios::binary | std::ios::trunc);
  if (!so) throw Error("cannot open '" + sp + "' for writing");
  so << summary.str();
  return 0;
}

int train_weights(const std::string& config_path, const std::string& out_path, bool quiet) {
  const harness::ExperimentConfig cfg = harness::load_config(config_path);
  const TrainResult res = harness::train_cli(cfg, out_path, quiet ? nullptr : &std::cerr);
  std::cout << "wrote " << out_path << " (M = " << res.params.dim() << ", L = " << res.params.num_layers()
            << ", final loss " << res.epoch_loss.back() << ")\n";
  return 0;
}

int trace(const std::string& config_path, const std::string& out_path) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  harness::prepare_simulation(cfg);
  if (out_path.empty()) {
    harness::write_traces(std::cout, cfg);
    return 0;
  }
  std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + out_path + "' for writing");
  harness::write_traces(os, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIMO detection simulator: sphere decoders, K-best and FS-Net"};
  app.require_subcommand(1);

  std::string config, out, summary;
  bool quiet = false;

  auto* sim = app.add_subcommand("simulate", "Run a Monte-Carlo BER/complexity experiment");
  sim->add_option("--config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Per-trial CSV output")->required();
  sim->add_option("--summary", summary, "Summary output (default <out>.summary.txt)");

  auto* tr = app.add_subcommand("train", "Train FS-Net from the [train] section");
  tr->add_option("--config", config, "Config file with a [train] section")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out, "Weight file to write")->required();
  tr->add_flag("--quiet", quiet, "Suppress progress output");

  auto* tc = app.add_subcommand("trace", "Write search convergence traces as CSV");
  tc->add_option("--config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
  tc->add_option("--out", out, "CSV output (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (sim->parsed()) return simulate(config, out, summary);
    if (tr->parsed()) return train_weights(config, out, quiet);
    if (tc->parsed()) return trace(config, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
