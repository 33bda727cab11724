// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bdrlab/checks.hpp"
#include "bdrlab/config.hpp"
#include "bdrlab/harness.hpp"
#include "bdrlab/report.hpp"

using namespace bdrlab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
  if (!passed) ++failures;
  std::printf("%s  [%2d] %s: %s\n", passed ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void report_check(int id, const CheckResult& r, double limit_seconds = 0.0) {
  const bool in_time = limit_seconds <= 0.0 || r.seconds < limit_seconds;
  std::ostringstream d;
  d << r.detail << "; " << r.seconds << " s";
  if (!in_time) d << " (limit " << limit_seconds << " s)";
  report(id, r.name, r.passed && in_time, d.str());
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  const fs::path source = BDRLAB_SOURCE_DIR;

  report_check(1, check_gradients(10), 60.0);
  report_check(2, check_exact_reductions(1000));
  report_check(3, check_binary_closed_form());
  report_check(4, check_cauchy(1000));
  report_check(5, check_lemma1(60), 120.0);
  {
    const CheckResult h = check_hessian();
    const CheckResult toy = check_quadratic_toy();
    report(6, "Hessian estimator and toy bound", h.passed && toy.passed, h.detail + "; " + toy.detail);
  }

  // Gaussian benchmark runs shared by the dynamics, accuracy and
  // initialization criteria.
  const ExperimentConfig bench = load_config(source / "configs" / "benchmark.cfg");
  std::map<LossVariant, std::vector<RunReport>> runs;
  double ce_bdr_seconds = 0.0;
  for (LossVariant v : {LossVariant::CE, LossVariant::CR, LossVariant::BDR}) {
    for (std::uint64_t seed : bench.seeds) {
      const auto start = std::chrono::steady_clock::now();
      runs[v].push_back(run_single(bench, v, seed));
      if (v != LossVariant::CR) ce_bdr_seconds += seconds_since(start);
    }
  }
  const auto& ce = runs[LossVariant::CE];
  const auto& cr = runs[LossVariant::CR];
  const auto& bdr = runs[LossVariant::BDR];
  const std::size_t seeds = bench.seeds.size();
  const std::size_t phases = ce.front().phases.size();

  {
    bool ok = ce_bdr_seconds < 600.0;
    std::ostringstream d;
    for (std::size_t t = 1; t < phases; ++t) {
      std::size_t f_wins = 0, c_wins = 0;
      for (std::size_t s = 0; s < seeds; ++s) {
        f_wins += bdr[s].phases[t].destruction.f_max <= ce[s].phases[t].destruction.f_max;
        c_wins += bdr[s].phases[t].destruction.converged_old_loss <= ce[s].phases[t].destruction.converged_old_loss;
      }
      ok = ok && f_wins >= 4 && c_wins >= 4;
      d << "phase " << t << ": F_max " << f_wins << "/" << seeds << ", converged L_old " << c_wins << "/" << seeds << "; ";
    }
    d << ce_bdr_seconds << " s";
    report(7, "destruction dynamics (BDR vs CE replay)", ok, d.str());
  }

  {
    double avg_ce = 0.0, avg_cr = 0.0, avg_bdr = 0.0;
    std::size_t over = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      avg_ce += ce[s].avg / static_cast<double>(seeds);
      avg_cr += cr[s].avg / static_cast<double>(seeds);
      avg_bdr += bdr[s].avg / static_cast<double>(seeds);
      const PhaseResult& a = ce[s].phases.back();
      const PhaseResult& b = cr[s].phases.back();
      over += b.new_accuracy < a.new_accuracy && *b.old_accuracy > *a.old_accuracy;
    }
    const bool gap_ok = avg_bdr >= avg_ce + 2.0;
    const bool cr_ok = avg_bdr >= avg_cr;
    const bool over_ok = over >= 3;
    std::ostringstream d;
    d << "mean Avg CE " << fmt(avg_ce) << ", CR " << fmt(avg_cr) << ", BDR " << fmt(avg_bdr) << "; BDR - CE "
      << fmt(avg_bdr - avg_ce) << (gap_ok ? " >= 2" : " < 2") << "; BDR " << (cr_ok ? ">=" : "<") << " CR; CR over-correction in "
      << over << "/" << seeds << " seeds";
    report(8, "accuracy direction", gap_ok && cr_ok && over_ok, d.str());
  }

  {
    ExperimentConfig sweep = bench;
    sweep.variants = {LossVariant::CE, LossVariant::BDR};
    const std::vector<std::string> values{"2", "5", "20"};
    const auto rows = run_sweep(sweep, "R", values, 1);
    std::map<std::string, double> gap;
    for (const SweepRow& r : rows) gap[r.param_value] += (r.variant == LossVariant::BDR ? 1.0 : -1.0) * r.avg / static_cast<double>(seeds);
    const bool ok = gap["2"] > gap["5"] && gap["2"] > gap["20"];
    report(9, "small-memory amplification", ok,
           "BDR - CE mean Avg gap: R=2 " + fmt(gap["2"]) + ", R=5 " + fmt(gap["5"]) + ", R=20 " + fmt(gap["20"]));
  }

  {
    bool ok = true;
    double worst = 0.0, worst_ce = 0.0;
    for (const auto* variant : {&ce, &cr, &bdr}) {
      for (const RunReport& r : *variant) {
        for (std::size_t t = 1; t < r.phases.size(); ++t) {
          const PhaseResult& p = r.phases[t];
          const double ratio = p.initial_loss_old / p.initial_loss_new;
          worst = std::max(worst, ratio);
          worst_ce = std::max(worst_ce, p.initial_ce_old / p.initial_ce_new);
          ok = ok && ratio < 0.2;
        }
      }
    }
    report(10, "initialization pattern", ok,
           "max recorded L_old / L_new at phase start " + fmt(worst) + " (plain CE old/new ratio, informational: " +
               fmt(worst_ce) + ")");
  }

  {
    const fs::path tmp = fs::temp_directory_path() / "bdrlab_acceptance_determinism";
    fs::remove_all(tmp);
    std::ostringstream sink;
    const fs::path minimal = source / "configs" / "minimal.cfg";
    const int a = cmd_run(minimal, (tmp / "a").string(), 1, sink, sink);
    const int b = cmd_run(minimal, (tmp / "b").string(), 1, sink, sink);
    std::size_t files = 0;
    bool identical = a == 0 && b == 0;
    for (const auto& entry : fs::directory_iterator(tmp / "a")) {
      if (entry.path().extension() != ".json" || entry.path().string().ends_with(".timing.json")) continue;
      ++files;
      identical = identical && slurp(entry.path()) == slurp(tmp / "b" / entry.path().filename());
    }
    const RunReport r1 = run_single(bench, LossVariant::BDR, 0);
    const RunReport r2 = run_single(bench, LossVariant::BDR, 0);
    const bool bodies = report_body(r1, bench) == report_body(r2, bench);
    fs::remove_all(tmp);
    report(11, "determinism", identical && files == 2 && bodies,
           std::to_string(files) + " report files byte-identical across two runs: " + (identical ? "yes" : "no") +
               "; benchmark report body repeated: " + (bodies ? "identical" : "different"));
  }

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
