#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bdrlab/checks.hpp"
#include "bdrlab/config.hpp"
#include "bdrlab/trainer.hpp"

namespace bdrlab {

// Runs fn(0..count-1) on up to `jobs` threads. The first exception is
// rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

RunReport run_single(const ExperimentConfig& config, LossVariant variant, std::uint64_t seed);

// Tab-separated: variant, seed, Avg, Last, then F_max per phase.
std::string summary_line(const RunReport& report);

inline const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> names{"m", "m_prime", "beta", "tau", "R", "S", "B", "lambda"};
  return names;
}

// Sets one sweepable parameter from its text value.
void apply_param(ExperimentConfig& config, const std::string& param, const std::string& value);

struct SweepRow {
  std::string param_value;
  LossVariant variant = LossVariant::CE;
  std::uint64_t seed = 0;
  double avg = 0.0;
  double last = 0.0;
  double f_max = 0.0;  // mean over incremental phases
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& param,
                                const std::vector<std::string>& values, std::size_t jobs);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Command entry points; return the process exit code. Errors go to `err`.
int cmd_run(const std::filesystem::path& config_path, const std::string& out_override, std::size_t jobs,
            std::ostream& out, std::ostream& err);
int cmd_verify(std::ostream& out, const VerifyHooks& hooks = VerifyHooks::library());
int cmd_sweep(const std::filesystem::path& config_path, const std::string& param, const std::vector<std::string>& values,
              const std::string& out_override, std::size_t jobs, std::ostream& out, std::ostream& err);

}  // namespace bdrlab
