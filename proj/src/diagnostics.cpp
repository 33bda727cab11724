#include "bdrlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bdrlab/error.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

PeakDestruction f_max(std::span<const double> trace) {
  if (trace.empty()) throw ArgumentError("f_max: empty trace");
  const auto it = std::max_element(trace.begin(), trace.end());
  return {*it - trace.front(), static_cast<std::size_t>(it - trace.begin())};
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0)
    for (double& x : v) x /= n;
  return n;
}

EigenEstimate power_iteration(const std::function<std::vector<double>(const std::vector<double>&)>& apply,
                              std::size_t dim, const HessianOptions& options, std::uint64_t stream) {
  Rng rng = Rng(options.seed).split(stream);
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  normalize(v);
  EigenEstimate est;
  double prev = 0.0;
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    std::vector<double> hv = apply(v);
    const double rayleigh = dot(v, hv);
    est.value = rayleigh;
    est.iterations = it;
    if (it > 1 && std::abs(rayleigh - prev) < options.tol * std::max(1.0, std::abs(rayleigh))) {
      est.converged = true;
      break;
    }
    prev = rayleigh;
    if (normalize(hv) == 0.0) {
      est.converged = true;  // v lies in the null space
      break;
    }
    v = std::move(hv);
  }
  return est;
}

}  // namespace

EigenEstimate hessian_top_eigen(const GradientFn& gradient, std::span<const double> theta,
                                const HessianOptions& options) {
  if (theta.empty()) throw ArgumentError("hessian_top_eigen: empty parameter vector");
  const std::size_t n = theta.size();
  const double h = options.fd_step;
  auto hvp = [&](const std::vector<double>& v) {
    std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < n; ++i) {
      plus[i] += h * v[i];
      minus[i] -= h * v[i];
    }
    const auto gp = gradient(plus);
    const auto gm = gradient(minus);
    if (gp.size() != n || gm.size() != n) throw DimensionError("hessian_top_eigen: gradient has wrong size");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
    return out;
  };

  EigenEstimate dominant = power_iteration(hvp, n, options, 0);
  if (dominant.value >= 0.0) return dominant;

  // Dominant eigenvalue is negative: iterate on H - lambda I, whose top
  // eigenvalue is (top(H) - lambda) >= 0.
  const double shift = dominant.value;
  auto shifted = [&](const std::vector<double>& v) {
    auto out = hvp(v);
    for (std::size_t i = 0; i < n; ++i) out[i] -= shift * v[i];
    return out;
  };
  EigenEstimate top = power_iteration(shifted, n, options, 1);
  top.value += shift;
  top.iterations += dominant.iterations;
  top.converged = top.converged && dominant.converged;
  return top;
}

CauchyCheck cauchy_check(std::span<const double> a, std::span<const double> b, double n) {
  if (a.size() != b.size()) {
    throw DimensionError("cauchy_check: contribution sums of size " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  if (!(n > 0.0)) throw ArgumentError("cauchy_check: N must be positive");
  CauchyCheck c;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum_sq += (a[i] + b[i]) * (a[i] + b[i]);
  const double n2 = n * n;
  c.lhs = sum_sq / n2;
  c.rhs = 4.0 * dot(a, b) / n2;
  c.gap = c.lhs - c.rhs;
  return c;
}

AccuracySummary metrics(std::span<const double> acc) {
  if (acc.empty()) throw ArgumentError("metrics: no phases");
  return {std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size()), acc.back()};
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ArgumentError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats old_loss_distribution(std::span<const double> trace) {
  if (trace.empty()) throw ArgumentError("old_loss_distribution: empty trace");
  std::vector<double> s(trace.begin(), trace.end());
  std::sort(s.begin(), s.end());
  BoxStats b;
  b.min = s.front();
  b.max = s.back();
  b.q1 = quantile_sorted(s, 0.25);
  b.median = quantile_sorted(s, 0.5);
  b.q3 = quantile_sorted(s, 0.75);
  const double iqr = b.q3 - b.q1;
  for (double v : trace)
    if (v < b.q1 - 1.5 * iqr || v > b.q3 + 1.5 * iqr) b.outliers.push_back(v);
  return b;
}

DestructionReport destruction_report(std::span<const double> trace, std::size_t tail) {
  const PeakDestruction peak = f_max(trace);
  DestructionReport r;
  r.initial_old_loss = trace.front();
  r.peak_old_loss = trace.front() + peak.value;
  r.f_max = peak.value;
  r.step_of_peak = peak.step;
  tail = std::clamp<std::size_t>(tail, 1, trace.size());
  r.converged_old_loss =
      std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(tail), trace.end(), 0.0) / static_cast<double>(tail);
  r.distribution = old_loss_distribution(trace);
  return r;
}

BoundReport bound_report(std::span<const double> old_loss_trace, std::span<const double> grad_total_sq,
                         std::span<const double> cauchy_gaps, const EigenEstimate& sigma, double learning_rate) {
  const PeakDestruction peak = f_max(old_loss_trace);
  if (grad_total_sq.size() < peak.step) throw StateError("bound_report: gradient trace shorter than N_s");
  BoundReport r;
  r.sigma_max = sigma.value;
  r.sigma_converged = sigma.converged;
  r.steps_to_peak = peak.step;
  r.grad_sq_sum = std::accumulate(grad_total_sq.begin(), grad_total_sq.begin() + static_cast<std::ptrdiff_t>(peak.step), 0.0);
  r.bound = static_cast<double>(peak.step) / 2.0 * learning_rate * learning_rate * sigma.value * r.grad_sq_sum;
  r.observed_f_max = peak.value;
  r.bound_minus_f_max = r.bound - peak.value;
  r.min_cauchy_gap = cauchy_gaps.empty() ? 0.0 : *std::min_element(cauchy_gaps.begin(), cauchy_gaps.end());
  return r;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("spearman: need two equal-length series of >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

QuadraticToy analytic_quadratic_toy(const std::vector<std::vector<double>>& H, std::span<const double> theta_star,
                                    std::span<const double> theta_new, double lr, std::size_t steps) {
  const std::size_t n = theta_star.size();
  if (H.size() != n || theta_new.size() != n) throw DimensionError("analytic_quadratic_toy: size mismatch");
  for (const auto& row : H)
    if (row.size() != n) throw DimensionError("analytic_quadratic_toy: Hessian is not square");

  auto old_loss = [&](const std::vector<double>& th) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s += (th[i] - theta_star[i]) * H[i][j] * (th[j] - theta_star[j]);
    return 0.5 * s;
  };
  GradientFn old_grad = [&](std::span<const double> th) {
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i] += H[i][j] * (th[j] - theta_star[j]);
    return g;
  };

  std::vector<double> theta(theta_star.begin(), theta_star.end());
  std::vector<double> trace{old_loss(theta)};
  std::vector<double> grad_sq;
  for (std::size_t s = 0; s < steps; ++s) {
    double gsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = theta[i] - theta_new[i];
      gsq += g * g;
      theta[i] -= lr * g;
    }
    grad_sq.push_back(gsq);
    trace.push_back(old_loss(theta));
  }

  HessianOptions opts;
  opts.max_iters = 20000;
  opts.tol = 1e-12;
  const EigenEstimate sigma = hessian_top_eigen(old_grad, theta_star, opts);
  const BoundReport b = bound_report(trace, grad_sq, {}, sigma, lr);
  return {b.observed_f_max, b.bound, b.steps_to_peak, sigma.value};
}

}  // namespace bdrlab
