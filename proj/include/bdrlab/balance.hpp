#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bdrlab/autodiff.hpp"

namespace bdrlab {

// Floor applied to intra-class variances before inversion.
inline constexpr double kVarianceFloor = 1e-8;

// psi_k = N_k / sum_i N_i.
std::vector<double> class_priors(std::span<const std::size_t> counts);

// Mean over samples and feature dimensions of the squared deviation from
// `mean`: the per-dimension variances averaged into one scalar.
double scalar_variance(std::span<const std::vector<double>> features, std::span<const double> mean);

// Inverse-variance weights normalized to sum to one. Variances are floored at
// kVarianceFloor first.
std::vector<double> compensation(std::span<const double> variances);

// Per-class training-status statistics tracked during a phase.
struct ClassStats {
  std::vector<std::vector<double>> means;  // running feature mean
  std::vector<double> variances;           // running scalar intra-class variance
  std::vector<double> omega;               // compensation from `variances`
  std::vector<std::size_t> totals;         // samples of the class in the phase's training set

  std::size_t size() const noexcept { return variances.size(); }
};

// Snapshot from one full pass: features[i] belongs to class labels[i].
ClassStats init_class_stats(const Tensor& features, std::span<const std::size_t> labels, std::size_t class_count);

struct BdrHyper {
  double m = 0.8;        // initialization mix of priors vs. compensation
  double m_prime = 0.8;  // training-time mix
  double beta = 0.99;    // weight of the frozen initial mix in pi_hat
  double tau = 1.0;      // offset exponent

  void validate() const;
};

struct OffsetSchedule {
  std::vector<double> psi;
  std::vector<double> pi_init;
  std::vector<double> pi_prime;
  std::vector<double> pi_hat;
  BdrHyper hyper;

  std::size_t size() const noexcept { return psi.size(); }
};

// pi_init = m psi + (1 - m) omega; pi_prime and pi_hat start at pi_init.
OffsetSchedule init_schedule(std::span<const double> psi, std::span<const double> omega_at_init, const BdrHyper& hyper);

// One momentum step from a mini-batch (features[i] of class labels[i]).
// Classes absent from the batch keep their statistics; a batch with no
// samples at all leaves both stats and schedule untouched.
void momentum_update(ClassStats& stats, OffsetSchedule& schedule, const Tensor& features,
                     std::span<const std::size_t> labels);

// tau * ln(pi_hat).
std::vector<double> offsets(const OffsetSchedule& schedule);

Var bdr_loss(Var logits, std::span<const std::size_t> labels, const OffsetSchedule& schedule);

// Constant rebalancing: cross-entropy on logits + ln(psi).
Var bal_ce_loss(Var logits, std::span<const std::size_t> labels, std::span<const double> psi);

// Inverse-frequency reweighting: sample of class k weighted by 1 / (K psi_k).
Var reweight_loss(Var logits, std::span<const std::size_t> labels, std::span<const double> psi);

struct Lemma1Result {
  bool equivalent = false;                  // adjusted decisions == balanced-optimal decisions
  bool unadjusted_equivalent = false;       // plain-risk decisions == balanced-optimal decisions
  std::vector<std::size_t> balanced;        // argmax_y P(x|y)
  std::vector<std::size_t> adjusted;        // argmax of the numerically found adjusted-risk minimizer
  std::vector<std::size_t> unadjusted;      // argmax of the plain-risk minimizer
};

// `likelihood[y][x]` is P(x | y) over a finite domain (rows sum to one),
// `priors[y]` the class priors. Minimizes the logit-adjusted and the plain
// cross-entropy risk per point by coordinate-wise golden-section search
// (at most `sweeps` passes) and compares argmax decisions.
Lemma1Result lemma1_oracle(const std::vector<std::vector<double>>& likelihood, std::span<const double> priors,
                           std::size_t sweeps = 400);

}  // namespace bdrlab
