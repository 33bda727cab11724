#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bdrlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Replaceable pieces of the library, so that mutation tests can confirm a
// check actually notices a broken implementation.
struct VerifyHooks {
  using CompensationFn = std::function<std::vector<double>(std::span<const double>)>;
  // Cross-entropy of one logit row against `label`: value and d/dlogits.
  using CeRowFn = std::function<std::pair<double, std::vector<double>>(std::span<const double>, std::size_t)>;

  CompensationFn compensation;
  CeRowFn ce_row;

  static VerifyHooks library();
};

// Every differentiable op against central differences.
CheckResult check_gradients(std::size_t instances_per_op = 10, std::uint64_t seed = 1);
// bdr_loss collapses to plain CE with uniform pi_hat, tau = 0, or m = 1 on balanced counts.
CheckResult check_exact_reductions(std::size_t trials = 1000, std::uint64_t seed = 2);
// d CE / d z1 == -1 / (1 + exp(z1 - z2)) for the true class, gaps in [-20, 20].
CheckResult check_binary_closed_form(const VerifyHooks& hooks = VerifyHooks::library());
// Finite, correct gradients at logits of magnitude up to 1000.
CheckResult check_large_logits(const VerifyHooks& hooks = VerifyHooks::library());
CheckResult check_cauchy(std::size_t trials = 1000, std::uint64_t seed = 3);
// Larger variance gets strictly smaller weight; weights sum to one.
CheckResult check_compensation(const VerifyHooks& hooks = VerifyHooks::library(), std::uint64_t seed = 4);
CheckResult check_lemma1(std::size_t problems = 60, std::uint64_t seed = 5);
CheckResult check_hessian(std::size_t trials = 30, std::uint64_t seed = 6);
CheckResult check_quadratic_toy(std::size_t trials = 20, std::uint64_t seed = 7);

std::vector<CheckResult> run_verify(const VerifyHooks& hooks = VerifyHooks::library());

}  // namespace bdrlab
