#include "bdrlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "bdrlab/error.hpp"
#include "bdrlab/report.hpp"

namespace bdrlab {

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;  // stop handing out work
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

RunReport run_single(const ExperimentConfig& config, LossVariant variant, std::uint64_t seed) {
  TrainConfig train = config.train;
  train.variant = variant;
  train.seed = seed;
  return run_experiment(build_stream(config, seed), train);
}

std::string summary_line(const RunReport& report) {
  std::ostringstream s;
  s << to_string(report.variant) << '\t' << report.seed << '\t' << format_double(report.avg) << '\t'
    << format_double(report.last);
  for (const PhaseResult& p : report.phases) s << '\t' << format_double(p.destruction.f_max);
  return s.str();
}

void apply_param(ExperimentConfig& config, const std::string& param, const std::string& value) {
  auto number = [&] {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ArgumentError("sweep value '" + value + "' for " + param + " is not a number");
    }
  };
  auto count = [&] {
    const double v = number();
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ArgumentError("sweep value '" + value + "' for " + param + " must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  };
  if (param == "m") config.train.bdr.m = number();
  else if (param == "m_prime") config.train.bdr.m_prime = number();
  else if (param == "beta") config.train.bdr.beta = number();
  else if (param == "tau") config.train.bdr.tau = number();
  else if (param == "R") config.train.memory.per_class = count();
  else if (param == "S") config.step = count();
  else if (param == "B") config.base = count();
  else if (param == "lambda") config.train.distill_weight = number();
  else {
    std::string names;
    for (const auto& n : sweep_params()) names += (names.empty() ? "" : ", ") + n;
    throw ArgumentError("unknown sweep parameter '" + param + "' (valid: " + names + ")");
  }
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& param,
                                const std::vector<std::string>& values, std::size_t jobs) {
  if (values.empty()) throw ArgumentError("sweep needs at least one value for " + param);
  std::vector<ExperimentConfig> configs;
  for (const std::string& v : values) {
    ExperimentConfig c = base;
    apply_param(c, param, v);
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (LossVariant variant : base.variants)
      for (std::uint64_t seed : base.seeds) rows.push_back({values[i], variant, seed});
  const std::size_t per_value = base.variants.size() * base.seeds.size();
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    SweepRow& row = rows[i];
    const RunReport report = run_single(configs[i / per_value], row.variant, row.seed);
    row.avg = report.avg;
    row.last = report.last;
    row.f_max = report.mean_incremental_f_max();
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << "param_value,variant,seed,avg,last,f_max\n";
  for (const SweepRow& r : rows) {
    s << r.param_value << ',' << to_string(r.variant) << ',' << r.seed << ',' << format_double(r.avg) << ','
      << format_double(r.last) << ',' << format_double(r.f_max) << '\n';
  }
  return s.str();
}

int cmd_run(const std::filesystem::path& config_path, const std::string& out_override, std::size_t jobs,
            std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig config = load_config(config_path);
    if (!out_override.empty()) config.out = out_override;
    config.validate();
    struct Job {
      LossVariant variant;
      std::uint64_t seed;
      std::string summary;
    };
    std::vector<Job> runs;
    for (LossVariant v : config.variants)
      for (std::uint64_t s : config.seeds) runs.push_back({v, s, {}});
    parallel_for(runs.size(), jobs, [&](std::size_t i) {
      const RunReport report = run_single(config, runs[i].variant, runs[i].seed);
      write_run_outputs(config.out, report, config);
      runs[i].summary = summary_line(report);
    });
    for (const Job& j : runs) out << j.summary << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << config_path.string() << ": " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_verify(std::ostream& out, const VerifyHooks& hooks) {
  bool all = true;
  for (const CheckResult& r : run_verify(hooks)) {
    all = all && r.passed;
    out << (r.passed ? "PASS" : "FAIL") << '\t' << r.name << '\t' << r.detail << '\t' << format_double(r.seconds)
        << "s\n";
  }
  return all ? 0 : 1;
}

int cmd_sweep(const std::filesystem::path& config_path, const std::string& param, const std::vector<std::string>& values,
              const std::string& out_override, std::size_t jobs, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig config = load_config(config_path);
    if (!out_override.empty()) config.out = out_override;
    config.validate();
    const auto rows = run_sweep(config, param, values, jobs);
    std::filesystem::create_directories(config.out);
    write_atomic(std::filesystem::path(config.out) / ("sweep_" + param + ".csv"), sweep_csv(rows));

    // Seed-aggregated mean Avg per (value, variant), in input order.
    for (const std::string& v : values) {
      out << param << '=' << v;
      for (LossVariant variant : config.variants) {
        double s = 0.0;
        std::size_t n = 0;
        for (const SweepRow& r : rows)
          if (r.param_value == v && r.variant == variant) {
            s += r.avg;
            ++n;
          }
        out << '\t' << to_string(variant) << '\t' << format_double(s / static_cast<double>(n));
      }
      out << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    err << config_path.string() << ": " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace bdrlab
