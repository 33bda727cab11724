#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "bdrlab/checks.hpp"
#include "bdrlab/config.hpp"
#include "bdrlab/error.hpp"
#include "bdrlab/harness.hpp"
#include "bdrlab/report.hpp"

using namespace bdrlab;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# tiny two-phase run
[dataset]
generator = gaussian
classes = 4
per_class = 30
dim = 4
separation = 3

[protocol]
base = 2
step = 2

[train]
epochs = 2
hidden = 8
hessian_iters = 3

[experiment]
variants = CE, BDR
seeds = 0
)";

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bdrlab_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(ConfigText, RoundTripIsStable) {
  const ExperimentConfig c = parse_config(kTiny);
  EXPECT_EQ(c.dataset.per_class, 30u);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{8}));
  const std::string once = serialize_config(c);
  EXPECT_EQ(serialize_config(parse_config(once)), once);
}

TEST(ConfigText, AwkwardDoublesRoundTrip) {
  ExperimentConfig c;
  c.train.learning_rate = 0.1 + 0.2;
  c.train.bdr.beta = 1.0 / 3.0;
  const ExperimentConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(back.train.learning_rate, c.train.learning_rate);
  EXPECT_EQ(back.train.bdr.beta, c.train.bdr.beta);
}

TEST(ConfigText, UnknownKeyNamedWithPosition) {
  try {
    parse_config("[memory]\n  memoryy = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 3u);
    EXPECT_NE(std::string(e.what()).find("memoryy"), std::string::npos);
  }
}

TEST(ConfigText, OtherSyntaxErrors) {
  EXPECT_THROW(parse_config("[memoryy]\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = three\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = 3\nepochs = 4\n"), ConfigError);
  try {
    parse_config("[bdr]\nm = 0.8\nbeta = x\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.column(), 8u);
  }
}

TEST(ConfigText, ShippedConfigsParseAndValidate) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(BDRLAB_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".cfg") continue;
    SCOPED_TRACE(entry.path().string());
    const ExperimentConfig c = load_config(entry.path());
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(serialize_config(parse_config(serialize_config(c))), serialize_config(c));
    ++seen;
  }
  EXPECT_GE(seen, 3u);
}

TEST(Report, CsvHeadersAndJsonSchema) {
  const ExperimentConfig c = parse_config(kTiny);
  const RunReport r = run_single(c, LossVariant::BDR, 0);
  EXPECT_EQ(step_trace_csv(r).substr(0, step_trace_csv(r).find('\n')),
            "phase,epoch,step,loss_new,loss_old,grad_new_norm,grad_old_norm,grad_total_sq,contrib_inner");
  EXPECT_EQ(schedule_csv(r).substr(0, schedule_csv(r).find('\n')), "step,class,psi,omega,pi_hat");
  EXPECT_EQ(boxplot_csv(r).substr(0, boxplot_csv(r).find('\n')), "phase,min,q1,median,q3,max,outlier_count");

  const auto doc = nlohmann::json::parse(report_document(r, c));
  EXPECT_EQ(doc["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(doc["body_sha256"], sha256_hex(report_body(r, c)));
  EXPECT_EQ(doc["body"]["phases"].size(), 2u);
  EXPECT_TRUE(doc["body"]["phases"][1].contains("old_accuracy"));
  EXPECT_FALSE(doc["body"].contains("wall_seconds"));
}

TEST(Report, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Report, RejectsNonFiniteNumbers) {
  const ExperimentConfig c = parse_config(kTiny);
  RunReport r = run_single(c, LossVariant::CE, 0);
  r.phases[0].accuracy = NAN;
  EXPECT_THROW(report_body(r, c), NumericError);
}

TEST(CmdRun, WritesOneJsonPerVariantAndIsDeterministic) {
  const fs::path dir = scratch_dir("cmd_run");
  const fs::path cfg = write_config(dir, kTiny);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run(cfg, (dir / "a").string(), 2, out, err), 0) << err.str();
  ASSERT_EQ(cmd_run(cfg, (dir / "b").string(), 1, out, err), 0) << err.str();
  for (const char* name : {"CE_0.json", "BDR_0.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / name));
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name));
  }
  // Summary: variant, seed, Avg, Last, one F_max per phase.
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 5);
  EXPECT_EQ(line.rfind("CE\t0\t", 0), 0u);
  fs::remove_all(dir);
}

TEST(CmdRun, ConfigErrorExitsNonzeroWithPosition) {
  const fs::path dir = scratch_dir("cmd_bad");
  const fs::path cfg = write_config(dir, "[memory]\nmemoryy = 3\n");
  std::ostringstream out, err;
  EXPECT_NE(cmd_run(cfg, "", 1, out, err), 0);
  EXPECT_NE(err.str().find("line 2, column 1"), std::string::npos);
  EXPECT_NE(err.str().find("memoryy"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Sweep, BetaTimesSeedsGivesTwelveRows) {
  ExperimentConfig c = parse_config(kTiny);
  c.variants = {LossVariant::BDR};
  c.seeds = {0, 1, 2};
  const auto rows = run_sweep(c, "beta", {"0", "0.5", "0.99", "1.0"}, 2);
  EXPECT_EQ(rows.size(), 12u);
  const std::string csv = sweep_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "param_value,variant,seed,avg,last,f_max");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Sweep, ArgumentErrors) {
  ExperimentConfig c = parse_config(kTiny);
  EXPECT_THROW(run_sweep(c, "beta", {}, 1), ArgumentError);
  try {
    apply_param(c, "gamma", "1");
    FAIL();
  } catch (const ArgumentError& e) {
    const std::string what = e.what();
    for (const auto& name : sweep_params()) EXPECT_NE(what.find(name), std::string::npos) << name;
  }
  EXPECT_THROW(apply_param(c, "R", "2.5"), ArgumentError);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(8, 3, [](std::size_t i) {
                 if (i == 5) throw StateError("boom");
               }),
               StateError);
}

TEST(Verify, LibraryPassesAllChecks) {
  std::ostringstream out;
  EXPECT_EQ(cmd_verify(out), 0) << out.str();
}

TEST(Verify, SignFlippedCompensationIsCaught) {
  VerifyHooks hooks = VerifyHooks::library();
  hooks.compensation = [](std::span<const double> v) {
    std::vector<double> w(v.begin(), v.end());
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    return w;
  };
  EXPECT_FALSE(check_compensation(hooks).passed);
}

TEST(Verify, UnstabilizedCrossEntropyIsCaught) {
  VerifyHooks hooks = VerifyHooks::library();
  hooks.ce_row = [](std::span<const double> z, std::size_t label) {
    double norm = 0.0;
    for (double v : z) norm += std::exp(v);
    std::vector<double> g(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) g[j] = std::exp(z[j]) / norm - (j == label ? 1.0 : 0.0);
    return std::pair{std::log(norm) - z[label], g};
  };
  EXPECT_FALSE(check_large_logits(hooks).passed);
  EXPECT_TRUE(check_binary_closed_form(hooks).passed);
}
