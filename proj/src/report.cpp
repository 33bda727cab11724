#include "bdrlab/report.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "bdrlab/error.hpp"

namespace bdrlab {

namespace {

using nlohmann::ordered_json;

void require_finite(const ordered_json& j, const std::string& path) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) throw NumericError("report value " + path + " is not finite");
  if (j.is_object())
    for (const auto& [k, v] : j.items()) require_finite(v, path + "." + k);
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) require_finite(j[i], path + "[" + std::to_string(i) + "]");
}

ordered_json box_json(const BoxStats& b) {
  return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}, {"outliers", b.outliers}};
}

ordered_json phase_json(const PhaseResult& p) {
  ordered_json j;
  j["phase"] = p.phase;
  j["classes"] = p.classes;
  j["train_size"] = p.train_size;
  j["memory_size"] = p.memory_size;
  j["accuracy"] = p.accuracy;
  j["old_accuracy"] = p.old_accuracy ? ordered_json(*p.old_accuracy) : ordered_json(nullptr);
  j["new_accuracy"] = p.new_accuracy;
  j["initial_loss_new"] = p.initial_loss_new;
  j["initial_loss_old"] = p.initial_loss_old;
  j["initial_ce_new"] = p.initial_ce_new;
  j["initial_ce_old"] = p.initial_ce_old;
  j["converged_loss_new"] = p.converged_loss_new;
  const DestructionReport& d = p.destruction;
  j["destruction"] = {{"initial_old_loss", d.initial_old_loss},
                      {"peak_old_loss", d.peak_old_loss},
                      {"f_max", d.f_max},
                      {"step_of_peak", d.step_of_peak},
                      {"converged_old_loss", d.converged_old_loss},
                      {"old_loss_distribution", box_json(d.distribution)}};
  if (p.bound) {
    const BoundReport& b = *p.bound;
    j["bound"] = {{"sigma_max", b.sigma_max},
                  {"sigma_converged", b.sigma_converged},
                  {"steps_to_peak", b.steps_to_peak},
                  {"grad_sq_sum", b.grad_sq_sum},
                  {"bound", b.bound},
                  {"observed_f_max", b.observed_f_max},
                  {"bound_minus_f_max", b.bound_minus_f_max},
                  {"min_cauchy_gap", b.min_cauchy_gap}};
  } else {
    j["bound"] = nullptr;
  }
  return j;
}

std::string num(double v) { return format_double(v); }

std::string run_stem(const RunReport& report) { return to_string(report.variant) + "_" + std::to_string(report.seed); }

}  // namespace

std::string report_body(const RunReport& report, const ExperimentConfig& config) {
  ordered_json body;
  body["variant"] = to_string(report.variant);
  body["seed"] = report.seed;
  ExperimentConfig echo = config;
  echo.out.clear();  // where results land is not part of the experiment
  body["config"] = serialize_config(echo);
  body["class_order"] = report.class_order;
  ordered_json phases = ordered_json::array();
  for (const PhaseResult& p : report.phases) phases.push_back(phase_json(p));
  body["phases"] = std::move(phases);
  body["avg"] = report.avg;
  body["last"] = report.last;
  body["mean_incremental_f_max"] = report.mean_incremental_f_max();
  ordered_json memory = ordered_json::object();
  for (const auto& [cls, ids] : report.memory) memory[std::to_string(cls)] = ids;
  body["memory"] = std::move(memory);
  const std::string stem = run_stem(report);
  body["traces"] = {{"steps", stem + "_trace.csv"}, {"schedule", stem + "_schedule.csv"}, {"boxplot", stem + "_boxplot.csv"}};
  require_finite(body, "body");
  return body.dump(2);
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw StateError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string report_document(const RunReport& report, const ExperimentConfig& config) {
  const std::string body = report_body(report, config);
  ordered_json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["body_sha256"] = sha256_hex(body);
  doc["body"] = ordered_json::parse(body);
  return doc.dump(2) + "\n";
}

std::string step_trace_csv(const RunReport& report) {
  std::ostringstream out;
  out << "phase,epoch,step,loss_new,loss_old,grad_new_norm,grad_old_norm,grad_total_sq,contrib_inner\n";
  for (const StepRecord& r : report.trace) {
    out << r.phase << ',' << r.epoch << ',' << r.step << ',' << num(r.loss_new) << ',' << num(r.loss_old) << ','
        << num(r.grad_new_norm) << ',' << num(r.grad_old_norm) << ',' << num(r.grad_total_sq) << ','
        << num(r.contrib_inner) << '\n';
  }
  return out.str();
}

std::string schedule_csv(const RunReport& report) {
  std::ostringstream out;
  out << "step,class,psi,omega,pi_hat\n";
  for (const ScheduleRecord& r : report.schedule) {
    for (std::size_t slot = 0; slot < r.pi_hat.size(); ++slot) {
      const std::size_t cls = slot < report.class_order.size() ? report.class_order[slot] : slot;
      out << r.step << ',' << cls << ',' << num(r.psi[slot]) << ',' << num(r.omega[slot]) << ',' << num(r.pi_hat[slot])
          << '\n';
    }
  }
  return out.str();
}

std::string boxplot_csv(const RunReport& report) {
  std::ostringstream out;
  out << "phase,min,q1,median,q3,max,outlier_count\n";
  for (const PhaseResult& p : report.phases) {
    const BoxStats& b = p.destruction.distribution;
    out << p.phase << ',' << num(b.min) << ',' << num(b.q1) << ',' << num(b.median) << ',' << num(b.q3) << ','
        << num(b.max) << ',' << b.outliers.size() << '\n';
  }
  return out.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw StateError("cannot open '" + tmp.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw StateError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path write_run_outputs(const std::filesystem::path& dir, const RunReport& report,
                                        const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  const std::string stem = run_stem(report);
  const auto json_path = dir / (stem + ".json");
  write_atomic(json_path, report_document(report, config));
  write_atomic(dir / (stem + "_trace.csv"), step_trace_csv(report));
  write_atomic(dir / (stem + "_schedule.csv"), schedule_csv(report));
  write_atomic(dir / (stem + "_boxplot.csv"), boxplot_csv(report));
  ordered_json timing{{"schema_version", kReportSchemaVersion}, {"wall_seconds", report.wall_seconds}};
  write_atomic(dir / (stem + ".timing.json"), timing.dump(2) + "\n");
  return json_path;
}

}  // namespace bdrlab
