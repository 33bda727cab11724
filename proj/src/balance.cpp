#include "bdrlab/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bdrlab/error.hpp"

namespace bdrlab {

std::vector<double> class_priors(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ArgumentError("class_priors: no classes");
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) throw ArgumentError("class_priors: class " + std::to_string(k) + " has no samples");
    total += static_cast<double>(counts[k]);
  }
  std::vector<double> psi(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) psi[k] = static_cast<double>(counts[k]) / total;
  return psi;
}

double scalar_variance(std::span<const std::vector<double>> features, std::span<const double> mean) {
  if (features.empty()) throw ArgumentError("scalar_variance: no features");
  const std::size_t d = mean.size();
  if (d == 0) throw DimensionError("scalar_variance: empty mean");
  double acc = 0.0;
  for (const auto& f : features) {
    if (f.size() != d) {
      throw DimensionError("scalar_variance: feature of dimension " + std::to_string(f.size()) +
                           " against mean of dimension " + std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) acc += (f[j] - mean[j]) * (f[j] - mean[j]);
  }
  return acc / static_cast<double>(features.size() * d);
}

std::vector<double> compensation(std::span<const double> variances) {
  if (variances.empty()) throw ArgumentError("compensation: no classes");
  bool all_zero = true;
  for (double v : variances) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("compensation: variance must be finite and >= 0");
    if (v > 0.0) all_zero = false;
  }
  if (all_zero) throw NumericError("compensation: all variances are zero");
  std::vector<double> omega(variances.size());
  double total = 0.0;
  for (std::size_t k = 0; k < variances.size(); ++k) {
    omega[k] = 1.0 / std::max(variances[k], kVarianceFloor);
    total += omega[k];
  }
  for (double& w : omega) w /= total;
  return omega;
}

ClassStats init_class_stats(const Tensor& features, std::span<const std::size_t> labels, std::size_t class_count) {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("init_class_stats: features " + shape_string(features.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.cols();
  std::vector<std::vector<std::vector<double>>> grouped(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_count) throw IndexError("init_class_stats: label " + std::to_string(labels[i]) + " out of range");
    grouped[labels[i]].emplace_back(features.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                                    features.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  ClassStats stats;
  stats.means.assign(class_count, std::vector<double>(d, 0.0));
  stats.variances.assign(class_count, 0.0);
  stats.totals.assign(class_count, 0);
  for (std::size_t k = 0; k < class_count; ++k) {
    const auto& group = grouped[k];
    if (group.empty()) throw ArgumentError("init_class_stats: class " + std::to_string(k) + " has no samples");
    for (const auto& f : group)
      for (std::size_t j = 0; j < d; ++j) stats.means[k][j] += f[j];
    for (double& v : stats.means[k]) v /= static_cast<double>(group.size());
    stats.variances[k] = scalar_variance(group, stats.means[k]);
    stats.totals[k] = group.size();
  }
  stats.omega = compensation(stats.variances);
  return stats;
}

void BdrHyper::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError(std::string(name) + " must lie in [0, 1]");
  };
  unit(m, "m");
  unit(m_prime, "m_prime");
  unit(beta, "beta");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ArgumentError("tau must be finite and >= 0");
}

namespace {

std::vector<double> mix(double weight, std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = weight * a[k] + (1.0 - weight) * b[k];
  return out;
}

}  // namespace

OffsetSchedule init_schedule(std::span<const double> psi, std::span<const double> omega_at_init, const BdrHyper& hyper) {
  hyper.validate();
  if (psi.size() != omega_at_init.size() || psi.empty()) {
    throw DimensionError("init_schedule: psi and omega sizes differ");
  }
  OffsetSchedule s;
  s.hyper = hyper;
  s.psi.assign(psi.begin(), psi.end());
  s.pi_init = mix(hyper.m, psi, omega_at_init);
  s.pi_prime = s.pi_init;
  s.pi_hat = s.pi_init;
  return s;
}

void momentum_update(ClassStats& stats, OffsetSchedule& schedule, const Tensor& features,
                     std::span<const std::size_t> labels) {
  const std::size_t classes = stats.size();
  if (schedule.size() != classes) throw DimensionError("momentum_update: schedule and stats cover different classes");
  if (labels.empty()) return;
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("momentum_update: features " + shape_string(features.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t d = features.cols();
  for (std::size_t y : labels)
    if (y >= classes) throw IndexError("momentum_update: unknown class " + std::to_string(y));
  if (classes > 0 && stats.means[0].size() != d) throw DimensionError("momentum_update: feature dimension changed");

  std::vector<std::size_t> batch_count(classes, 0);
  std::vector<std::vector<double>> batch_sum(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t k = labels[i];
    if (batch_sum[k].empty()) batch_sum[k].assign(d, 0.0);
    ++batch_count[k];
    for (std::size_t j = 0; j < d; ++j) batch_sum[k][j] += features.at(i, j);
  }

  for (std::size_t k = 0; k < classes; ++k) {
    const std::size_t nk = batch_count[k];
    if (nk == 0) continue;
    const double n = static_cast<double>(stats.totals[k]);
    const double denom = n + static_cast<double>(nk);
    auto& mean = stats.means[k];
    for (std::size_t j = 0; j < d; ++j) mean[j] = (n * mean[j] + batch_sum[k][j]) / denom;
    double dev = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != k) continue;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += (features.at(i, j) - mean[j]) * (features.at(i, j) - mean[j]);
      dev += sq / static_cast<double>(d);
    }
    stats.variances[k] = (n * stats.variances[k] + dev) / denom;
  }

  stats.omega = compensation(stats.variances);
  schedule.pi_prime = mix(schedule.hyper.m_prime, schedule.psi, stats.omega);
  schedule.pi_hat = mix(schedule.hyper.beta, schedule.pi_init, schedule.pi_prime);
}

std::vector<double> offsets(const OffsetSchedule& schedule) {
  std::vector<double> out(schedule.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double p = schedule.pi_hat[k];
    if (!(p > 0.0) || !std::isfinite(p)) throw NumericError("offsets: pi_hat entry " + std::to_string(k) + " is not positive");
    out[k] = schedule.hyper.tau == 0.0 ? 0.0 : schedule.hyper.tau * std::log(p);
  }
  return out;
}

Var bdr_loss(Var logits, std::span<const std::size_t> labels, const OffsetSchedule& schedule) {
  if (logits.value().cols() != schedule.size()) {
    throw DimensionError("bdr_loss: logits have " + std::to_string(logits.value().cols()) + " classes, schedule " +
                         std::to_string(schedule.size()));
  }
  return ce_with_offset(logits, offsets(schedule), labels);
}

namespace {

std::vector<double> log_priors(std::span<const double> psi) {
  std::vector<double> out(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) {
    if (!(psi[k] > 0.0)) throw NumericError("class prior " + std::to_string(k) + " is not positive");
    out[k] = std::log(psi[k]);
  }
  return out;
}

}  // namespace

Var bal_ce_loss(Var logits, std::span<const std::size_t> labels, std::span<const double> psi) {
  return ce_with_offset(logits, log_priors(psi), labels);
}

Var reweight_loss(Var logits, std::span<const std::size_t> labels, std::span<const double> psi) {
  std::vector<double> weights(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) {
    if (!(psi[k] > 0.0)) throw NumericError("class prior " + std::to_string(k) + " is not positive");
    weights[k] = 1.0 / (static_cast<double>(psi.size()) * psi[k]);
  }
  const std::vector<double> zero(psi.size(), 0.0);
  return weighted_ce_with_offset(logits, zero, weights, labels);
}

// --- balanced-error equivalence oracle -----------------------------------

namespace {

// Expected cross-entropy at one domain point: sum_y mass[y] * -log softmax(f + shift)[y].
double point_risk(std::span<const double> f, std::span<const double> shift, std::span<const double> mass) {
  const std::size_t k = f.size();
  double mx = -INFINITY;
  for (std::size_t y = 0; y < k; ++y) mx = std::max(mx, f[y] + shift[y]);
  double z = 0.0;
  for (std::size_t y = 0; y < k; ++y) z += std::exp(f[y] + shift[y] - mx);
  const double lse = mx + std::log(z);
  double r = 0.0;
  for (std::size_t y = 0; y < k; ++y)
    if (mass[y] > 0.0) r += mass[y] * (lse - f[y] - shift[y]);
  return r;
}

// Coordinate-wise golden-section minimization; score 0 is pinned at 0 since
// the risk is invariant to a common shift.
std::vector<double> minimize_point_risk(std::span<const double> shift, std::span<const double> mass, std::size_t sweeps) {
  const std::size_t k = mass.size();
  std::vector<double> f(k, 0.0);
  constexpr double kBracket = 60.0;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double prev = point_risk(f, shift, mass);
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t j = 1; j < k; ++j) {
      double lo = -kBracket, hi = kBracket;
      auto at = [&](double v) {
        f[j] = v;
        return point_risk(f, shift, mass);
      };
      double c = hi - inv_phi * (hi - lo), d = lo + inv_phi * (hi - lo);
      double fc = at(c), fd = at(d);
      while (hi - lo > 1e-11) {
        if (fc < fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - inv_phi * (hi - lo);
          fc = at(c);
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + inv_phi * (hi - lo);
          fd = at(d);
        }
      }
      f[j] = 0.5 * (lo + hi);
    }
    const double cur = point_risk(f, shift, mass);
    if (std::abs(prev - cur) < 1e-15) break;
    prev = cur;
  }
  return f;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

Lemma1Result lemma1_oracle(const std::vector<std::vector<double>>& likelihood, std::span<const double> priors,
                           std::size_t sweeps) {
  const std::size_t k = likelihood.size();
  if (k < 1 || k > 5) throw ArgumentError("lemma1_oracle: need 1..5 classes");
  if (priors.size() != k) throw ArgumentError("lemma1_oracle: priors do not match class count");
  const std::size_t x_count = likelihood[0].size();
  if (x_count < 1 || x_count > 12) throw ArgumentError("lemma1_oracle: need 1..12 domain points");
  double prior_sum = 0.0;
  for (double p : priors) {
    if (!(p > 0.0)) throw ArgumentError("lemma1_oracle: priors must be positive");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9) throw ArgumentError("lemma1_oracle: priors must sum to 1");
  for (const auto& row : likelihood) {
    if (row.size() != x_count) throw ArgumentError("lemma1_oracle: ragged likelihood table");
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ArgumentError("lemma1_oracle: negative likelihood");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ArgumentError("lemma1_oracle: likelihood rows must sum to 1");
  }

  const std::vector<double> adjust = log_priors(priors);
  const std::vector<double> none(k, 0.0);
  Lemma1Result result;
  result.equivalent = true;
  result.unadjusted_equivalent = true;
  for (std::size_t x = 0; x < x_count; ++x) {
    std::vector<double> cond(k), mass(k);
    double total = 0.0;
    for (std::size_t y = 0; y < k; ++y) {
      cond[y] = likelihood[y][x];
      mass[y] = likelihood[y][x] * priors[y];
      total += mass[y];
    }
    if (total == 0.0) {
      result.balanced.push_back(0);
      result.adjusted.push_back(0);
      result.unadjusted.push_back(0);
      continue;
    }
    const std::size_t bal = argmax(cond);
    const std::size_t adj = argmax(minimize_point_risk(adjust, mass, sweeps));
    const std::size_t raw = argmax(minimize_point_risk(none, mass, sweeps));
    // A tie in P(x|y) makes any of the tied classes balanced-optimal.
    auto optimal = [&](std::size_t y) { return cond[y] >= cond[bal] * (1.0 - 1e-12); };
    result.balanced.push_back(bal);
    result.adjusted.push_back(adj);
    result.unadjusted.push_back(raw);
    if (!optimal(adj)) result.equivalent = false;
    if (!optimal(raw)) result.unadjusted_equivalent = false;
  }
  return result;
}

}  // namespace bdrlab
