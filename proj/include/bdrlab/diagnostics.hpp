#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bdrlab {

struct PeakDestruction {
  double value = 0.0;     // max(trace) - trace[0]
  std::size_t step = 0;   // index of the maximum (first occurrence)
};

PeakDestruction f_max(std::span<const double> old_loss_trace);

// Gradient of some scalar objective at a flat parameter vector.
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;  // false means `value` is the last iterate
};

struct HessianOptions {
  std::size_t max_iters = 200;
  double tol = 1e-6;
  double fd_step = 1e-4;
  std::uint64_t seed = 0;
};

// Largest eigenvalue of the Hessian at theta by power iteration on
// central-difference Hessian-vector products. If the dominant eigenvalue is
// negative, a second shifted iteration recovers the top one.
EigenEstimate hessian_top_eigen(const GradientFn& gradient, std::span<const double> theta,
                                const HessianOptions& options = {});

struct CauchyCheck {
  double lhs = 0.0;  // ||(a + b) / N||^2
  double rhs = 0.0;  // 4 (a . b) / N^2
  double gap = 0.0;  // lhs - rhs == ||a - b||^2 / N^2
};

CauchyCheck cauchy_check(std::span<const double> grad_new_sum, std::span<const double> grad_old_sum, double n);

struct AccuracySummary {
  double avg = 0.0;
  double last = 0.0;
};

// Unweighted mean over phases and the final entry.
AccuracySummary metrics(std::span<const double> per_phase_accuracies);

// Linear-interpolation (type 7) quantile of sorted data, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  std::vector<double> outliers;  // beyond 1.5 IQR from the quartiles
};

BoxStats old_loss_distribution(std::span<const double> trace);

struct DestructionReport {
  double initial_old_loss = 0.0;
  double peak_old_loss = 0.0;
  double f_max = 0.0;
  std::size_t step_of_peak = 0;
  double converged_old_loss = 0.0;
  BoxStats distribution;
};

// `tail` trailing entries are averaged into the converged value.
DestructionReport destruction_report(std::span<const double> old_loss_trace, std::size_t tail);

struct BoundReport {
  double sigma_max = 0.0;
  bool sigma_converged = false;
  std::size_t steps_to_peak = 0;  // N_s
  double grad_sq_sum = 0.0;       // sum_{s=1..N_s} ||grad L_t(theta_{s-1})||^2
  double bound = 0.0;             // (N_s / 2) alpha^2 sigma_max grad_sq_sum
  double observed_f_max = 0.0;
  double bound_minus_f_max = 0.0;
  double min_cauchy_gap = 0.0;    // min over logged steps of lhs - rhs
};

// grad_total_sq[s] is ||grad L_t||^2 at the parameters before update s;
// cauchy_gaps holds lhs - rhs per logged step.
BoundReport bound_report(std::span<const double> old_loss_trace, std::span<const double> grad_total_sq,
                         std::span<const double> cauchy_gaps, const EigenEstimate& sigma, double learning_rate);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct QuadraticToy {
  double f_max = 0.0;
  double bound = 0.0;
  std::size_t steps_to_peak = 0;
  double sigma_max = 0.0;
};

// Previous phase fully learnt at theta_star with old loss
// 0.5 (theta - theta_star)^T H (theta - theta_star) (so the constant vanishes),
// then plain gradient descent on a new quadratic
// 0.5 ||theta - theta_new||^2 for `steps` steps of size `learning_rate`.
// Returns the observed maximal destruction and the bound evaluated with the
// Hessian eigenvalue estimated by hessian_top_eigen.
QuadraticToy analytic_quadratic_toy(const std::vector<std::vector<double>>& old_hessian,
                                    std::span<const double> theta_star, std::span<const double> theta_new,
                                    double learning_rate, std::size_t steps);

}  // namespace bdrlab
