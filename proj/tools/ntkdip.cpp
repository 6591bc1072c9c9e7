// Experiment harness CLI.
//
//   ntkdip run <config.json> [--jobs N] [--out DIR]
//   ntkdip validate <config.json>
//   ntkdip list-experiments
//
// Exit codes: 0 success, 2 config error, 3 numerical failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "ntkdip/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"deep-image-prior kernel-regime experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--jobs", jobs, "fan seeds across N workers")->default_val(1);
  run->add_option("--out", out_dir, "override the output directory");

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config_path, "experiment config file")->required();

  app.add_subcommand("list-experiments", "print the known experiment names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-experiments")) {
      for (const auto& name : ntkdip::experiment_names()) std::printf("%s\n", name.c_str());
      return 0;
    }
    ntkdip::ExperimentConfig cfg = ntkdip::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (app.got_subcommand("validate")) {
      ntkdip::validate_config(cfg);
      std::printf("ok: %s\n", cfg.experiment.c_str());
      return 0;
    }
    ntkdip::run_seed_sweep(cfg, jobs);
    std::printf("done: artifacts in %s\n", cfg.output_dir.string().c_str());
    return 0;
  } catch (const ntkdip::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
