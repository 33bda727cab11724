#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "bdrlab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental learning lab with balanced destruction-reconstruction"};
  app.require_subcommand(1);

  std::string out_dir;
  std::size_t jobs = 1;
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--jobs", jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run every (variant, seed) of a config");
  run->add_option("config", run_config, "Config file")->required();

  app.add_subcommand("verify", "Run the oracle and property checks");

  std::string sweep_config, param;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Sweep one hyper-parameter over a list of values");
  sweep->add_option("config", sweep_config, "Config file")->required();
  sweep->add_option("--param", param, "One of m, m_prime, beta, tau, R, S, B, lambda")->required();
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->expected(0, -1);

  // Global options are accepted after the subcommand too.
  for (auto* sub : {run, sweep}) {
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--jobs", jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
  }

  CLI11_PARSE(app, argc, argv);

  if (*run) return bdrlab::cmd_run(run_config, out_dir, jobs, std::cout, std::cerr);
  if (*sweep) return bdrlab::cmd_sweep(sweep_config, param, values, out_dir, jobs, std::cout, std::cerr);
  return bdrlab::cmd_verify(std::cout);
}
