#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bdrlab/autodiff.hpp"
#include "bdrlab/balance.hpp"
#include "bdrlab/checks.hpp"
#include "bdrlab/config.hpp"
#include "bdrlab/diagnostics.hpp"
#include "bdrlab/error.hpp"
#include "bdrlab/harness.hpp"
#include "bdrlab/report.hpp"

namespace py = pybind11;
using namespace bdrlab;

namespace {

Tensor to_matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size(), c = rows.empty() ? 0 : rows.front().size();
  std::vector<double> flat;
  flat.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat));
}

std::vector<std::vector<double>> to_rows(std::span<const double> flat, std::size_t cols) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < flat.size(); i += cols) out.emplace_back(flat.begin() + i, flat.begin() + i + cols);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Class-incremental learning lab core";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.attr("REPORT_SCHEMA_VERSION") = kReportSchemaVersion;

  m.def("class_priors", [](const std::vector<std::size_t>& counts) { return class_priors(counts); }, py::arg("counts"));
  m.def("compensation", [](const std::vector<double>& v) { return compensation(v); }, py::arg("variances"));
  m.def(
      "bdr_offsets",
      [](const std::vector<double>& psi, const std::vector<double>& omega, double m_, double tau) {
        BdrHyper h;
        h.m = m_;
        h.tau = tau;
        return offsets(init_schedule(psi, omega, h));
      },
      py::arg("psi"), py::arg("omega"), py::arg("m") = 0.8, py::arg("tau") = 1.0,
      "tau * ln(m psi + (1 - m) omega) at phase start.");
  m.def(
      "ce_with_offset",
      [](const std::vector<std::vector<double>>& logits, const std::vector<double>& offsets_,
         const std::vector<std::size_t>& labels) {
        const Tensor x = to_matrix(logits);
        auto [value, grad] = value_and_grad([&](Var z) { return ce_with_offset(z, offsets_, labels); }, x);
        return py::make_tuple(value, to_rows(grad, x.cols()));
      },
      py::arg("logits"), py::arg("offsets"), py::arg("labels"), "Mean offset cross-entropy and its gradient.");
  m.def(
      "cauchy_check",
      [](const std::vector<double>& a, const std::vector<double>& b, double n) {
        const CauchyCheck c = cauchy_check(a, b, n);
        return py::make_tuple(c.lhs, c.rhs, c.gap);
      },
      py::arg("a"), py::arg("b"), py::arg("n"));
  m.def(
      "f_max",
      [](const std::vector<double>& trace) {
        const PeakDestruction p = f_max(trace);
        return py::make_tuple(p.value, p.step);
      },
      py::arg("trace"));
  m.def(
      "lemma1",
      [](const std::vector<std::vector<double>>& likelihood, const std::vector<double>& priors) {
        const Lemma1Result r = lemma1_oracle(likelihood, priors);
        py::dict d;
        d["equivalent"] = r.equivalent;
        d["unadjusted_equivalent"] = r.unadjusted_equivalent;
        d["balanced"] = r.balanced;
        d["adjusted"] = r.adjusted;
        d["unadjusted"] = r.unadjusted;
        return d;
      },
      py::arg("likelihood"), py::arg("priors"));

  m.def(
      "canonical_config", [](const std::string& text) { return serialize_config(parse_config(text)); }, py::arg("text"),
      "Parse a config and return its canonical text.");
  m.def(
      "run_report",
      [](const std::string& config_text, const std::string& variant, std::uint64_t seed) {
        const ExperimentConfig c = parse_config(config_text);
        c.validate();
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_single(c, parse_loss_variant(variant), seed);
        }
        return report_document(r, c);
      },
      py::arg("config_text"), py::arg("variant"), py::arg("seed"), "JSON report document for one run.");
  m.def("verify", [] {
    py::list out;
    for (const CheckResult& r : run_verify()) out.append(py::make_tuple(r.name, r.passed, r.detail));
    return out;
  });
  m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); }, py::arg("data"));
}
