#include "smcmc/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Sequential MCMC filtering experiments (SMCMC, AS-SMCMC, EP-SMCMC)"};
  std::string config_path, algo, out;
  std::uint64_t seed = 0;
  int runs = 0;
  bool emit_summary = false, timing = false, quiet = false;

  app.add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  app.add_option("--algo", algo, "Override the algorithm")->check(CLI::IsMember({"smcmc", "as-smcmc", "ep-smcmc"}));
  auto* seed_opt = app.add_option("--seed", seed, "Override the master seed");
  auto* runs_opt = app.add_option("--runs", runs, "Override the replication count")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Override the output directory");
  app.add_flag("--emit-summary", emit_summary, "Also write summary.json");
  app.add_flag("--timing", timing, "Fill the wall_ms column (output is then not byte-reproducible)");
  app.add_flag("-q,--quiet", quiet, "No progress output");
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = smcmc::load_config(config_path);
    if (!algo.empty()) cfg.algorithm = smcmc::parse_algorithm(algo);
    if (*seed_opt) cfg.seed = seed;
    if (*runs_opt) cfg.runs = runs;
    if (!out.empty()) cfg.out = out;
    cfg.timing = timing;
    cfg.validate();
    auto progress = [&](const std::string& msg) {
      if (!quiet) std::cerr << msg << '\n';
    };
    return smcmc::run_experiment(cfg, emit_summary, progress);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
